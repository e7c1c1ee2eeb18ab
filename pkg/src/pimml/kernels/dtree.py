"""Histogram-based decision tree grown level by level through the host.

A pre-pass reduces per-core feature min/max so the host can fix uniform bin
edges.  Each level the host broadcasts the current tree, every core routes
its rows to the frontier nodes and builds per (node, feature, bin) class
histograms, and the host merges them (64-bit integer counts), evaluates Gini
impurity at every bin boundary, and either splits or closes each node.

Rows are routed by comparing bin indices (bin < cut goes left), the same
arithmetic used to build the histograms, so routing and counts always agree.
"""

from __future__ import annotations

import numpy as np

from ..errors import PimmlError
from ..pimsim import PimDevice, finalize_report, launch
from .common import (
    MODE_REAL,
    Hyperparams,
    PackedDataset,
    bin_indices,
    chunk_ranges,
    core_views,
    decode_features,
    decode_labels,
    mram_read_chunks,
    mram_write_chunks,
    plan_regions,
)
from ..fixedpoint import dequantize_array
from .models import TreeModel


def _gini(counts, n: int) -> float:
    """1 - sum(p_c^2); exact integer numerator, one float division."""
    s = 0
    for c in counts:
        ci = int(c)
        s += ci * ci
    return 1.0 - s / (n * n)


def _load_rows(ctx, arg):
    """All local rows as (values float64, class ids int64)."""
    view = arg["view"]
    d = view.n_features
    xs, ys = [], []
    for lo, hi in arg["chunks"]:
        rows = hi - lo
        off, nbytes = view.feature_bytes(lo, hi)
        x = decode_features(view, ctx.mram_read(off, nbytes), rows)
        loff, lbytes = view.label_bytes(lo, hi)
        y = decode_labels(view, ctx.mram_read(loff, lbytes))
        if view.frac_bits is not None:
            x = dequantize_array(x, arg["fmt"])
            y = y >> view.frac_bits  # class ids quantize exactly to id << frac
        xs.append(np.asarray(x, dtype=np.float64))
        ys.append(np.asarray(y, dtype=np.int64))
    if not xs:
        return np.empty((0, d)), np.empty(0, dtype=np.int64)
    return np.vstack(xs), np.concatenate(ys)


def _dtree_core_minmax(ctx, arg):
    if arg is None:
        return None
    x, _ = _load_rows(ctx, arg)
    d = arg["view"].n_features
    if x.shape[0]:
        lo = x.min(axis=0)
        hi = x.max(axis=0)
    else:
        lo = np.full(d, np.inf)
        hi = np.full(d, -np.inf)
    ctx.charge("cmp", 2 * x.shape[0] * d)
    ctx.mram_write(np.concatenate([lo, hi]).astype("<f8").tobytes(), arg["out_off"])
    return None


def _dtree_core_hist(ctx, arg):
    if arg is None:
        return None
    view = arg["view"]
    d = view.n_features
    n_bins, n_classes = arg["n_bins"], arg["n_classes"]
    bp = np.frombuffer(ctx.mram_read(arg["bins_off"], 2 * d * 8), dtype="<f8")
    mins, widths = bp[:d], bp[d:]
    n_nodes = arg["n_nodes"]
    tree = np.frombuffer(
        mram_read_chunks(ctx, arg["params_off"], n_nodes * 16), dtype="<i4"
    ).reshape(n_nodes, 4)  # feature, cut, left, right; feature -1 = leaf
    x, y = _load_rows(ctx, arg)
    rows = x.shape[0]
    bins = bin_indices(x, mins, widths, n_bins)
    node = np.zeros(rows, dtype=np.int64)
    feat, cut = tree[:, 0].astype(np.int64), tree[:, 1].astype(np.int64)
    left, right = tree[:, 2].astype(np.int64), tree[:, 3].astype(np.int64)
    while True:
        nf = feat[node]
        internal = nf >= 0
        if not internal.any():
            break
        row_bin = bins[np.arange(rows), np.where(internal, nf, 0)]
        child = np.where(row_bin < cut[node], left[node], right[node])
        node = np.where(internal, child, node)
        ctx.charge("cmp", int(internal.sum()))
    fpos = arg["frontier_pos"]
    hist = np.zeros((arg["n_frontier"], d, n_bins, n_classes), dtype=np.int64)
    pos = fpos[node]
    sel = pos >= 0
    if sel.any():
        psel, bsel, ysel = pos[sel], bins[sel], y[sel]
        for f in range(d):
            np.add.at(hist, (psel, f, bsel[:, f], ysel), 1)
        nsel = int(sel.sum())
        ctx.charge("add32", nsel * d * 2)
        ctx.charge("mul32", nsel * d)
    mram_write_chunks(ctx, hist.astype("<i8").tobytes(), arg["out_off"])
    return None


def dtree_train(dev: PimDevice, packed: PackedDataset, hp: Hyperparams):
    ds = packed.dataset
    n, d = ds.n_rows, ds.n_features
    if ds.labels is None:
        raise PimmlError("decision tree training needs class labels")
    labels = np.asarray(ds.labels)
    if not np.all(labels == np.floor(labels)) or labels.min(initial=0) < 0:
        raise PimmlError("decision tree labels must be non-negative class ids")
    n_classes = int(labels.max()) + 1 if n else 1
    n_bins = hp.n_bins
    if n_bins < 2:
        raise PimmlError(f"n_bins must be >= 2, got {n_bins}")

    views = core_views(packed)
    rows_per_chunk = max(1, dev.config.scratchpad_bytes // max(1, d * packed.elem_bytes))
    core_chunks = [chunk_ranges(c, rows_per_chunk) for _, c in packed.plan.ranges]

    max_frontier = 1 << hp.max_depth
    hist_bytes = max_frontier * d * n_bins * n_classes * 8
    max_nodes = (1 << (hp.max_depth + 1)) - 1
    regions = plan_regions(
        packed, dev,
        [("bins", [2 * d * 8] * packed.plan.n_cores),
         ("params", [max_nodes * 16] * packed.plan.n_cores),
         ("out", [hist_bytes] * packed.plan.n_cores)],
    )
    active = packed.active_cores()

    base_args: list = []
    for cid in range(packed.plan.n_cores):
        if packed.plan.ranges[cid][1] == 0:
            base_args.append(None)
            continue
        base_args.append({
            "view": views[cid],
            "chunks": core_chunks[cid],
            "fmt": packed.fmt,
            "bins_off": regions[cid]["bins"],
            "params_off": regions[cid]["params"],
            "out_off": regions[cid]["out"],
            "n_bins": n_bins,
            "n_classes": n_classes,
        })

    iter_costs = []

    # pre-pass: global per-feature min/max, then fixed uniform bin edges
    _, cost = launch(dev, _dtree_core_minmax, base_args)
    gmin = np.full(d, np.inf)
    gmax = np.full(d, -np.inf)
    gather_map = {}
    for cid in active:
        raw = dev.host_read_bank(cid, regions[cid]["out"], 2 * d * 8)
        gather_map[cid] = 2 * d * 8
        vals = np.frombuffer(raw, dtype="<f8")
        gmin = np.minimum(gmin, vals[:d])
        gmax = np.maximum(gmax, vals[d:])
    widths = (gmax - gmin) / n_bins
    bin_blob = np.concatenate([gmin, widths]).astype("<f8").tobytes()
    bcast_map = {}
    for cid in active:
        dev.host_write_bank(cid, regions[cid]["bins"], bin_blob)
        bcast_map[cid] = len(bin_blob)
    iter_costs.append(
        (cost.max_core_cycles(), dev.link_cycles(gather_map) + dev.link_cycles(bcast_map))
    )

    model = TreeModel(bin_lo=gmin.copy(), bin_width=widths.copy(),
                      n_bins=n_bins, n_classes=n_classes)

    def new_node():
        model.feature.append(-1)
        model.cut_bin.append(-1)
        model.threshold.append(float("nan"))
        model.left.append(-1)
        model.right.append(-1)
        model.leaf_class.append(-1)
        return model.n_nodes - 1

    root = new_node()
    frontier = [root]
    node_depth = {root: 0}
    levels = 0

    while frontier:
        tree_blob = np.array(
            [[model.feature[i], model.cut_bin[i], model.left[i], model.right[i]]
             for i in range(model.n_nodes)],
            dtype="<i4",
        ).tobytes()
        fpos = np.full(model.n_nodes, -1, dtype=np.int64)
        for p, nid in enumerate(frontier):
            fpos[nid] = p
        n_frontier = len(frontier)
        out_bytes = n_frontier * d * n_bins * n_classes * 8

        to_map = {}
        for cid in active:
            dev.host_write_bank(cid, regions[cid]["params"], tree_blob)
            to_map[cid] = len(tree_blob)
            base_args[cid].update(
                n_nodes=model.n_nodes, frontier_pos=fpos, n_frontier=n_frontier
            )
        to_cycles = dev.link_cycles(to_map)

        _, cost = launch(dev, _dtree_core_hist, base_args)

        hist = np.zeros((n_frontier, d, n_bins, n_classes), dtype=np.int64)
        gather_map = {}
        for cid in active:
            raw = dev.host_read_bank(cid, regions[cid]["out"], out_bytes)
            gather_map[cid] = out_bytes
            hist += np.frombuffer(raw, dtype="<i8").reshape(hist.shape)
        iter_costs.append((cost.max_core_cycles(), to_cycles + dev.link_cycles(gather_map)))
        levels += 1

        next_frontier = []
        for p, nid in enumerate(frontier):
            node_hist = hist[p]  # (d, n_bins, n_classes)
            class_counts = node_hist[0].sum(axis=0)
            n_node = int(class_counts.sum())
            depth = node_depth[nid]
            majority = int(np.argmax(class_counts)) if n_node else 0
            pure = n_node and int(class_counts.max()) == n_node
            if pure or depth >= hp.max_depth or n_node < hp.min_samples:
                model.leaf_class[nid] = majority
                continue
            parent_gini = _gini(class_counts, n_node)
            best = None  # (weighted_gini, feature, cut)
            for f in range(d):
                if widths[f] <= 0:
                    continue
                prefix = np.cumsum(node_hist[f], axis=0)  # (n_bins, n_classes)
                for cutj in range(1, n_bins):
                    left_counts = prefix[cutj - 1]
                    nl = int(left_counts.sum())
                    nr = n_node - nl
                    if nl == 0 or nr == 0:
                        continue
                    right_counts = class_counts - left_counts
                    wg = (nl * _gini(left_counts, nl) + nr * _gini(right_counts, nr)) / n_node
                    if best is None or wg < best[0]:
                        best = (wg, f, cutj)
            if best is None or not best[0] < parent_gini:
                model.leaf_class[nid] = majority
                continue
            _, f, cutj = best
            model.feature[nid] = f
            model.cut_bin[nid] = cutj
            model.threshold[nid] = float(gmin[f] + widths[f] * cutj)
            lchild = new_node()
            rchild = new_node()
            model.left[nid] = lchild
            model.right[nid] = rchild
            node_depth[lchild] = depth + 1
            node_depth[rchild] = depth + 1
            next_frontier.extend([lchild, rchild])
        frontier = next_frontier

    report = finalize_report(dev, iter_costs, iterations=levels, prologue_cycles=packed.load_cycles)
    return model, report
