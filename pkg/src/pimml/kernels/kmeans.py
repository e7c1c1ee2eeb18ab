"""Lloyd's K-means on the simulated machine.

Each iteration the host broadcasts the centroids; every core assigns its
local rows to the nearest centroid (squared Euclidean distance, lowest id on
ties), accumulates per-cluster sums and counts, and tracks how many of its
assignments changed since the previous iteration (stored in a bank state
region).  The host merges partials in canonical order; an empty cluster keeps
its previous centroid; training stops when no assignment changed.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..errors import FixedPointOverflowError
from ..fixedpoint import dequantize_array, div_round_half_even, quantize_array
from ..pimsim import PimDevice, finalize_report, launch
from .common import (
    MODE_REAL,
    Hyperparams,
    PackedDataset,
    boundary_blocks,
    chunk_ranges,
    core_views,
    decode_features,
    distances_sq,
    fsum_columns,
    mram_read_chunks,
    mram_write_chunks,
    plan_regions,
    whole_blocks_for,
)
from .models import CentroidModel

_ACC_LIMIT = 1 << 63


def initial_centroids(ds, k: int) -> np.ndarray:
    """First k distinct rows of the dataset, in row order (deterministic)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    chosen = []
    seen = set()
    for row in ds.features:
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(row.copy())
            if len(chosen) == k:
                return np.array(chosen)
    raise ValueError(f"dataset has fewer than k={k} distinct rows")


def _kmeans_core_real(ctx, arg):
    view = arg["view"]
    k, d = arg["k"], view.n_features
    c = np.frombuffer(ctx.mram_read(arg["params_off"], k * d * 8), dtype="<f8").reshape(k, d)
    blocks = arg["blocks"]
    nb = len(blocks)
    sums = np.zeros((nb, k, d))
    counts = np.zeros((nb, k), dtype=np.int64)
    changed = 0
    for bi, (lo, hi) in enumerate(blocks):
        rows = hi - lo
        off, nbytes = view.feature_bytes(lo, hi)
        x = decode_features(view, ctx.mram_read(off, nbytes), rows)
        dist = distances_sq(x, c)
        assign = np.argmin(dist, axis=1).astype(np.int64)
        prev = np.frombuffer(ctx.mram_read(arg["state_off"] + lo * 4, rows * 4), dtype="<i4")
        changed += int((assign != prev).sum())
        ctx.mram_write(assign.astype("<i4").tobytes(), arg["state_off"] + lo * 4)
        for j in range(k):
            mask = assign == j
            counts[bi, j] = int(mask.sum())
            if counts[bi, j]:
                sums[bi, j] = fsum_columns(x[mask])
        ctx.charge("add32", rows * k * d * 2)
        ctx.charge("mul32", rows * k * d)
        ctx.charge("cmp", rows * max(k - 1, 0))
    buf = sums.astype("<f8").tobytes() + counts.astype("<i8").tobytes()
    buf += np.int64(changed).tobytes()
    mram_write_chunks(ctx, buf, arg["out_off"])


def _kmeans_core_fixed(ctx, arg):
    view = arg["view"]
    k, d = arg["k"], view.n_features
    c_raw = np.frombuffer(
        ctx.mram_read(arg["params_off"], k * d * 4), dtype="<i4"
    ).astype(np.int64).reshape(k, d)
    sums = [[0] * d for _ in range(k)]
    counts = [0] * k
    changed = 0
    for lo, hi in arg["chunks"]:
        rows = hi - lo
        off, nbytes = view.feature_bytes(lo, hi)
        x_raw = decode_features(view, ctx.mram_read(off, nbytes), rows)
        max_abs = int(np.abs(x_raw).max(initial=0)) + int(np.abs(c_raw).max(initial=0))
        if d * max_abs * max_abs >= (1 << 62):
            raise FixedPointOverflowError("squared distance may overflow 64 bits")
        dist = np.empty((rows, k), dtype=np.int64)
        for j in range(k):
            diff = x_raw - c_raw[j]
            dist[:, j] = (diff * diff).sum(axis=1)
        assign = np.argmin(dist, axis=1).astype(np.int64)
        prev = np.frombuffer(ctx.mram_read(arg["state_off"] + lo * 4, rows * 4), dtype="<i4")
        changed += int((assign != prev).sum())
        ctx.mram_write(assign.astype("<i4").tobytes(), arg["state_off"] + lo * 4)
        for j in range(k):
            mask = assign == j
            cnt = int(mask.sum())
            counts[j] += cnt
            if cnt:
                colsum = x_raw[mask].sum(axis=0)
                for dim in range(d):
                    sums[j][dim] += int(colsum[dim])
                    if not -_ACC_LIMIT <= sums[j][dim] < _ACC_LIMIT:
                        raise FixedPointOverflowError("cluster sum overflow")
        ctx.charge("add32", rows * k * d * 2)
        ctx.charge("mul32", rows * k * d)
        ctx.charge("cmp", rows * max(k - 1, 0))
    buf = np.array(sums, dtype="<i8").tobytes() + np.array(counts, dtype="<i8").tobytes()
    buf += np.int64(changed).tobytes()
    mram_write_chunks(ctx, buf, arg["out_off"])


def _kmeans_core(ctx, arg):
    if arg is None:
        return None
    if arg["mode"] == MODE_REAL:
        _kmeans_core_real(ctx, arg)
    else:
        _kmeans_core_fixed(ctx, arg)
    return None


def kmeans_train(
    dev: PimDevice,
    packed: PackedDataset,
    hp: Hyperparams,
    assignment_trace: Optional[list] = None,
):
    """Returns (CentroidModel, KernelReport); optionally records per-iteration
    assignments into `assignment_trace` (adds gather traffic for the reads)."""
    ds = packed.dataset
    n, d = ds.n_rows, ds.n_features
    k = hp.k
    real = hp.mode == MODE_REAL
    views = core_views(packed)
    c0 = initial_centroids(ds, k)

    if real:
        core_blocks = [whole_blocks_for(s, c, n) for s, c in packed.plan.ranges]
        local_blocks = [
            [(lo - s, hi - s) for lo, hi in blocks]
            for (s, _), blocks in zip(packed.plan.ranges, core_blocks)
        ]
        host_blocks = boundary_blocks(packed.plan, n)
        out_sizes = [len(b) * (k * d * 8 + k * 8) + 8 for b in core_blocks]
        params_bytes = k * d * 8
    else:
        rows_per_chunk = max(1, dev.config.scratchpad_bytes // max(1, d * packed.elem_bytes))
        core_chunks = [chunk_ranges(c, rows_per_chunk) for _, c in packed.plan.ranges]
        host_blocks = []
        out_sizes = [k * d * 8 + k * 8 + 8] * packed.plan.n_cores
        params_bytes = k * d * 4

    state_sizes = [c * 4 for _, c in packed.plan.ranges]
    regions = plan_regions(
        packed, dev,
        [("params", [params_bytes] * packed.plan.n_cores),
         ("out", out_sizes),
         ("state", state_sizes)],
    )

    active = packed.active_cores()
    prologue = packed.load_cycles
    # previous-assignment state starts at -1 everywhere
    init_map = {}
    for c in active:
        count = packed.plan.ranges[c][1]
        dev.host_write_bank(c, regions[c]["state"], b"\xff" * (count * 4))
        init_map[c] = count * 4
    prologue += dev.link_cycles(init_map)

    args: list = []
    for core_id in range(packed.plan.n_cores):
        if packed.plan.ranges[core_id][1] == 0:
            args.append(None)
            continue
        base = {
            "mode": hp.mode,
            "view": views[core_id],
            "k": k,
            "params_off": regions[core_id]["params"],
            "out_off": regions[core_id]["out"],
            "state_off": regions[core_id]["state"],
        }
        if real:
            base["blocks"] = local_blocks[core_id]
        else:
            base["chunks"] = core_chunks[core_id]
        args.append(base)

    centroids = c0.copy()
    if not real:
        c_raw = quantize_array(c0, hp.fmt)
    boundary_prev = {lo: np.full(hi - lo, -1, dtype=np.int64) for lo, hi in host_blocks}

    iter_costs = []
    iters_run = 0
    for _ in range(hp.iterations):
        if real:
            cbytes = centroids.astype("<f8").tobytes()
        else:
            cbytes = c_raw.astype("<i4").tobytes()
        for cid in active:
            dev.host_write_bank(cid, regions[cid]["params"], cbytes)
        to_cycles = dev.link_cycles({cid: len(cbytes) for cid in active})

        _, cost = launch(dev, _kmeans_core, args)

        changed_total = 0
        gather_map = {}
        if real:
            block_sums: dict[int, np.ndarray] = {}
            block_counts: dict[int, np.ndarray] = {}
            for cid in active:
                nb = len(core_blocks[cid])
                size = nb * (k * d * 8 + k * 8) + 8
                raw = dev.host_read_bank(cid, regions[cid]["out"], size)
                gather_map[cid] = size
                sums = np.frombuffer(raw[: nb * k * d * 8], dtype="<f8").reshape(nb, k, d)
                counts = np.frombuffer(
                    raw[nb * k * d * 8: nb * k * d * 8 + nb * k * 8], dtype="<i8"
                ).reshape(nb, k)
                changed_total += int(np.frombuffer(raw[-8:], dtype="<i8")[0])
                for (lo, _), s, c in zip(core_blocks[cid], sums, counts):
                    block_sums[lo] = s
                    block_counts[lo] = c
            boundary_assign = {}
            for lo, hi in host_blocks:
                x = ds.features[lo:hi]
                assign = np.argmin(distances_sq(x, centroids), axis=1).astype(np.int64)
                changed_total += int((assign != boundary_prev[lo]).sum())
                boundary_prev[lo] = assign
                boundary_assign[lo] = assign
                s = np.zeros((k, d))
                c = np.zeros(k, dtype=np.int64)
                for j in range(k):
                    mask = assign == j
                    c[j] = int(mask.sum())
                    if c[j]:
                        s[j] = fsum_columns(x[mask])
                block_sums[lo] = s
                block_counts[lo] = c
            order = sorted(block_sums)
            total_counts = np.zeros(k, dtype=np.int64)
            for lo in order:
                total_counts += block_counts[lo]
            new_c = centroids.copy()
            for j in range(k):
                if total_counts[j] > 0:
                    for dim in range(d):
                        new_c[j, dim] = math.fsum(
                            block_sums[lo][j, dim] for lo in order
                        ) / total_counts[j]
            if assignment_trace is not None:
                assignment_trace.append(
                    _gather_assignments(dev, packed, regions, boundary_assign, host_blocks)
                )
            centroids = new_c
        else:
            total_sums = [[0] * d for _ in range(k)]
            total_counts = [0] * k
            for cid in active:
                size = k * d * 8 + k * 8 + 8
                raw = dev.host_read_bank(cid, regions[cid]["out"], size)
                gather_map[cid] = size
                sums = np.frombuffer(raw[: k * d * 8], dtype="<i8").reshape(k, d)
                counts = np.frombuffer(raw[k * d * 8: k * d * 8 + k * 8], dtype="<i8")
                changed_total += int(np.frombuffer(raw[-8:], dtype="<i8")[0])
                for j in range(k):
                    total_counts[j] += int(counts[j])
                    for dim in range(d):
                        total_sums[j][dim] += int(sums[j, dim])
            for j in range(k):
                if total_counts[j] > 0:
                    for dim in range(d):
                        c_raw[j, dim] = div_round_half_even(
                            total_sums[j][dim], total_counts[j]
                        )
            if assignment_trace is not None:
                assignment_trace.append(
                    _gather_assignments(dev, packed, regions, {}, [])
                )

        from_cycles = dev.link_cycles(gather_map)
        iter_costs.append((cost.max_core_cycles(), to_cycles + from_cycles))
        iters_run += 1
        if changed_total == 0:
            break

    if real:
        model = CentroidModel(centroids)
    else:
        model = CentroidModel(dequantize_array(c_raw, hp.fmt), raw=c_raw.copy(), fmt=hp.fmt)
    report = finalize_report(dev, iter_costs, iterations=iters_run, prologue_cycles=prologue)
    return model, report


def _gather_assignments(dev, packed, regions, boundary_assign, host_blocks):
    """Full assignment vector: core state regions plus host-computed boundary rows."""
    out = np.empty(packed.n_rows, dtype=np.int64)
    for cid, (start, count) in enumerate(packed.plan.ranges):
        if count == 0:
            continue
        raw = dev.host_read_bank(cid, regions[cid]["state"], count * 4)
        out[start:start + count] = np.frombuffer(raw, dtype="<i4")
    for (lo, hi) in host_blocks:
        out[lo:hi] = boundary_assign[lo]
    return out
