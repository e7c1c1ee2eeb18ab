"""Single-machine double-precision reference implementations (oracles).

Used only by tests and the bench --compare path.  The oracles follow the same
canonical 256-row block summation as the kernels' real mode, so the
distributed runs can be checked for exact agreement rather than loose
tolerances.  Clarity first; performance is a non-goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels.common import Hyperparams
from .kernels.models import CentroidModel, LinearModel, TreeModel
from .layout import Dataset

_BLOCK = 256


@dataclass
class OracleResult:
    model: object
    trace: list = field(default_factory=list)
    assignments: list = field(default_factory=list)  # kmeans only, one array per iteration


def _blocks(n: int):
    return [(lo, min(lo + _BLOCK, n)) for lo in range(0, n, _BLOCK)]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _colsum_exact(mat: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(mat[:, j]) for j in range(mat.shape[1])])


def _gd_oracle(ds: Dataset, hp: Hyperparams, logistic: bool) -> OracleResult:
    n, d = ds.n_rows, ds.n_features
    y = ds.labels.astype(np.float64)
    w = np.zeros(d)
    trace = []
    for _ in range(hp.iterations):
        partials = []
        for lo, hi in _blocks(n):
            x = ds.features[lo:hi]
            z = x @ w
            if logistic:
                err = _sigmoid(z) - y[lo:hi]
            else:
                err = z - y[lo:hi]
            partials.append(_colsum_exact(x * err[:, None]))
        if partials:
            stacked = np.array(partials)
            total = np.array([math.fsum(stacked[:, j]) for j in range(d)])
        else:
            total = np.zeros(d)
        g = total / n
        w = w - hp.learning_rate * g
        trace.append(_loss(ds.features, y, w, logistic))
    kind = "logreg" if logistic else "linreg"
    return OracleResult(LinearModel(w, kind), trace)


def _loss(x, y, w, logistic) -> float:
    z = x @ w
    if logistic:
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    r = z - y
    return float(r @ r / len(r)) if len(r) else 0.0


def oracle_linreg(ds: Dataset, hp: Hyperparams) -> OracleResult:
    return _gd_oracle(ds, hp, logistic=False)


def oracle_logreg(ds: Dataset, hp: Hyperparams) -> OracleResult:
    return _gd_oracle(ds, hp, logistic=True)


def oracle_kmeans(ds: Dataset, hp: Hyperparams) -> OracleResult:
    n, d = ds.n_rows, ds.n_features
    k = hp.k
    if k < 1:
        raise ValueError("k must be >= 1")
    # deterministic init: first k distinct rows
    chosen, seen = [], set()
    for row in ds.features:
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(row.copy())
            if len(chosen) == k:
                break
    if len(chosen) < k:
        raise ValueError(f"dataset has fewer than k={k} distinct rows")
    centroids = np.array(chosen)
    prev = np.full(n, -1, dtype=np.int64)
    result = OracleResult(None)
    for _ in range(hp.iterations):
        assign = np.empty(n, dtype=np.int64)
        block_sums = []
        block_counts = []
        inertia_parts = []
        for lo, hi in _blocks(n):
            x = ds.features[lo:hi]
            dist = np.empty((hi - lo, k))
            for j in range(k):
                diff = x - centroids[j]
                dist[:, j] = (diff * diff).sum(axis=1)
            a = np.argmin(dist, axis=1).astype(np.int64)
            assign[lo:hi] = a
            s = np.zeros((k, d))
            c = np.zeros(k, dtype=np.int64)
            for j in range(k):
                mask = a == j
                c[j] = int(mask.sum())
                if c[j]:
                    s[j] = _colsum_exact(x[mask])
            block_sums.append(s)
            block_counts.append(c)
            inertia_parts.extend(dist.min(axis=1))
        changed = int((assign != prev).sum())
        prev = assign.copy()
        counts = np.sum(block_counts, axis=0).astype(np.int64) if block_counts else np.zeros(k, np.int64)
        new_c = centroids.copy()
        for j in range(k):
            if counts[j] > 0:
                for dim in range(d):
                    new_c[j, dim] = math.fsum(s[j, dim] for s in block_sums) / counts[j]
        result.assignments.append(assign)
        result.trace.append(math.fsum(inertia_parts))
        centroids = new_c
        if changed == 0:
            break
    result.model = CentroidModel(centroids)
    return result


def _gini(counts, n: int) -> float:
    s = 0
    for c in counts:
        ci = int(c)
        s += ci * ci
    return 1.0 - s / (n * n)


def oracle_dtree(ds: Dataset, hp: Hyperparams) -> OracleResult:
    """Same binned, level-order procedure as the distributed tree, on one machine."""
    n, d = ds.n_rows, ds.n_features
    y = ds.labels.astype(np.int64)
    n_classes = int(y.max()) + 1 if n else 1
    n_bins = hp.n_bins
    gmin = ds.features.min(axis=0)
    gmax = ds.features.max(axis=0)
    widths = (gmax - gmin) / n_bins
    w = np.where(widths > 0, widths, 1.0)
    bins = np.floor((ds.features - gmin) / w).astype(np.int64)
    bins[:, widths <= 0] = 0
    bins = np.clip(bins, 0, n_bins - 1)

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
    # frontier holds (node id, depth, row index array)
    frontier = [(root, 0, np.arange(n))]
    result = OracleResult(model)
    while frontier:
        impurities = []
        next_frontier = []
        for nid, depth, rows in frontier:
            yb = y[rows]
            class_counts = np.bincount(yb, minlength=n_classes).astype(np.int64)
            n_node = len(rows)
            majority = int(np.argmax(class_counts)) if n_node else 0
            pure = n_node and int(class_counts.max()) == n_node
            if pure or depth >= hp.max_depth or n_node < hp.min_samples:
                model.leaf_class[nid] = majority
                continue
            parent_gini = _gini(class_counts, n_node)
            impurities.append(parent_gini)
            best = None
            for f in range(d):
                if widths[f] <= 0:
                    continue
                hist = np.zeros((n_bins, n_classes), dtype=np.int64)
                np.add.at(hist, (bins[rows, f], yb), 1)
                prefix = np.cumsum(hist, axis=0)
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
            go_left = bins[rows, f] < cutj
            next_frontier.append((lchild, depth + 1, rows[go_left]))
            next_frontier.append((rchild, depth + 1, rows[~go_left]))
        result.trace.append(impurities)
        frontier = next_frontier
    return result


def oracle_dtree_exhaustive(ds: Dataset, hp: Hyperparams) -> OracleResult:
    """Greedy tree trying every midpoint between sorted distinct feature values."""
    n, d = ds.n_rows, ds.n_features
    y = ds.labels.astype(np.int64)
    n_classes = int(y.max()) + 1 if n else 1

    model = TreeModel(bin_lo=np.zeros(d), bin_width=np.ones(d),
                      n_bins=hp.n_bins, n_classes=n_classes)
    model.feature, model.cut_bin, model.threshold = [], [], []
    model.left, model.right, model.leaf_class = [], [], []

    def new_node():
        model.feature.append(-1)
        model.cut_bin.append(-1)
        model.threshold.append(float("nan"))
        model.left.append(-1)
        model.right.append(-1)
        model.leaf_class.append(-1)
        return model.n_nodes - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        nid = new_node()
        yb = y[rows]
        class_counts = np.bincount(yb, minlength=n_classes).astype(np.int64)
        n_node = len(rows)
        majority = int(np.argmax(class_counts)) if n_node else 0
        pure = n_node and int(class_counts.max()) == n_node
        if pure or depth >= hp.max_depth or n_node < hp.min_samples:
            model.leaf_class[nid] = majority
            return nid
        parent_gini = _gini(class_counts, n_node)
        best = None
        for f in range(d):
            vals = np.sort(np.unique(ds.features[rows, f]))
            for a, b in zip(vals[:-1], vals[1:]):
                thr = (a + b) / 2.0
                go_left = ds.features[rows, f] <= thr
                nl = int(go_left.sum())
                nr = n_node - nl
                if nl == 0 or nr == 0:
                    continue
                lc = np.bincount(yb[go_left], minlength=n_classes)
                rc = class_counts - lc
                wg = (nl * _gini(lc, nl) + nr * _gini(rc, nr)) / n_node
                if best is None or wg < best[0]:
                    best = (wg, f, thr)
        if best is None or not best[0] < parent_gini:
            model.leaf_class[nid] = majority
            return nid
        _, f, thr = best
        model.feature[nid] = f
        model.threshold[nid] = thr
        go_left = ds.features[rows, f] <= thr
        model.left[nid] = grow(rows[go_left], depth + 1)
        model.right[nid] = grow(rows[~go_left], depth + 1)
        return nid

    grow(np.arange(n), 0)
    return OracleResult(model)


def predict_exhaustive_tree(model: TreeModel, ds: Dataset) -> np.ndarray:
    """Threshold-comparison routing for exhaustive trees (no binning)."""
    out = np.empty(ds.n_rows, dtype=np.int64)
    for i, row in enumerate(ds.features):
        nid = 0
        while model.feature[nid] >= 0:
            if row[model.feature[nid]] <= model.threshold[nid]:
                nid = model.left[nid]
            else:
                nid = model.right[nid]
        out[i] = model.leaf_class[nid]
    return out


def grad_check(
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
    w: np.ndarray,
    epsilon: float,
) -> float:
    """Central finite differences vs analytic gradient; returns the relative
    l2 gap ||g_num - g_ana|| / max(||g_ana||, tiny)."""
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must be in [1e-7, 1e-4]")
    _, g_ana = loss(w)
    g_num = np.empty_like(g_ana)
    for i in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[i] += epsilon
        wm[i] -= epsilon
        fp, _ = loss(wp)
        fm, _ = loss(wm)
        g_num[i] = (fp - fm) / (2.0 * epsilon)
    denom = max(float(np.linalg.norm(g_ana)), 1e-30)
    return float(np.linalg.norm(g_num - g_ana)) / denom


def make_quadratic_loss(x: np.ndarray, y: np.ndarray):
    """Mean squared error loss: f(w) = ||Xw - y||^2 / n."""
    n = len(y)

    def loss(w):
        r = x @ w - y
        return float(r @ r / n), 2.0 * (x.T @ r) / n

    return loss


def make_logistic_loss(x: np.ndarray, y: np.ndarray):
    """Mean negative log-likelihood for labels in {0, 1}."""
    n = len(y)

    def loss(w):
        z = x @ w
        f = float(np.mean(np.logaddexp(0.0, z) - y * z))
        g = x.T @ (_sigmoid(z) - y) / n
        return f, g

    return loss
