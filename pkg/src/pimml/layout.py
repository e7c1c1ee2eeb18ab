"""Datasets: CSV ingestion, synthetic generators, partitioning, bank packing.

Per-core bank images are row-major with a 12-byte header and the label block
after the feature block, so a core streams its rows over strictly increasing
contiguous offsets.  Fixed-point images quantize every element to a shared
Q-format; real-mode images store raw float64 with a sentinel in the header's
frac_bits field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, PimmlError
from .fixedpoint import QFormat, dequantize_array, quantize_array

HEADER_BYTES = 12
REAL_FRAC_SENTINEL = 0xFFFFFFFF

# Synthetic features stay inside this range so Q16.16 products remain well
# within the documented safe accumulator bound.
SYNTH_FEATURE_BOUND = 4.0

_INT_DTYPES = {8: "<i1", 16: "<i2", 32: "<i4"}


@dataclass
class Dataset:
    features: np.ndarray  # (n_rows, n_features) float64, row-major
    labels: Optional[np.ndarray] = None  # float64 values or integer class ids

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels length must match row count")
            if not np.isfinite(self.labels.astype(np.float64)).all():
                raise ValueError("labels contain non-finite values")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PartitionPlan:
    ranges: tuple  # ((row_start, row_count), ...) one entry per core

    @property
    def n_cores(self) -> int:
        return len(self.ranges)

    def counts(self) -> list[int]:
        return [c for _, c in self.ranges]


def partition_rows(n_rows: int, n_cores: int) -> PartitionPlan:
    """Contiguous balanced split; the first n_rows % n_cores cores get one extra."""
    if n_rows < 0 or n_cores < 1:
        raise ValueError("need n_rows >= 0 and n_cores >= 1")
    base, extra = divmod(n_rows, n_cores)
    ranges = []
    start = 0
    for core in range(n_cores):
        count = base + (1 if core < extra else 0)
        ranges.append((start, count))
        start += count
    return PartitionPlan(tuple(ranges))


@dataclass
class BankImage:
    """One core's packed block: header, contiguous features, then labels."""

    row_count: int
    n_features: int
    frac_bits: int  # REAL_FRAC_SENTINEL marks float64 payload
    feature_raws: np.ndarray  # (row_count, n_features)
    label_raws: Optional[np.ndarray]
    elem_bytes: int

    @property
    def feature_block_bytes(self) -> int:
        return self.row_count * self.n_features * self.elem_bytes

    @property
    def label_block_bytes(self) -> int:
        return 0 if self.label_raws is None else self.row_count * self.elem_bytes

    @property
    def n_bytes(self) -> int:
        return HEADER_BYTES + self.feature_block_bytes + self.label_block_bytes

    @property
    def labels_offset(self) -> int:
        return HEADER_BYTES + self.feature_block_bytes

    def feature_offset(self, r: int, f: int) -> int:
        return HEADER_BYTES + (r * self.n_features + f) * self.elem_bytes

    def _payload_dtype(self) -> str:
        if self.frac_bits == REAL_FRAC_SENTINEL:
            return "<f8"
        return _INT_DTYPES[self.elem_bytes * 8]

    def to_bytes(self) -> bytes:
        dt = self._payload_dtype()
        out = struct.pack("<III", self.row_count, self.n_features, self.frac_bits)
        out += np.ascontiguousarray(self.feature_raws).astype(dt).tobytes()
        if self.label_raws is not None:
            out += np.ascontiguousarray(self.label_raws).astype(dt).tobytes()
        return out


def pack_partition(
    ds: Dataset,
    plan: PartitionPlan,
    fmt: QFormat,
    bank_bytes: Optional[int] = None,
) -> list[BankImage]:
    """Quantize and pack each core's rows; errors name the offending core."""
    images = []
    for core_id, (start, count) in enumerate(plan.ranges):
        feats = quantize_array(ds.features[start:start + count], fmt)
        labels = None
        if ds.labels is not None:
            labels = quantize_array(ds.labels[start:start + count].astype(np.float64), fmt)
        img = BankImage(count, ds.n_features, fmt.frac_bits, feats, labels, fmt.elem_bytes)
        if bank_bytes is not None and img.n_bytes > bank_bytes:
            raise CapacityError(
                f"core {core_id}: partition needs {img.n_bytes} B, bank holds {bank_bytes} B"
            )
        images.append(img)
    return images


def pack_partition_real(
    ds: Dataset, plan: PartitionPlan, bank_bytes: Optional[int] = None
) -> list[BankImage]:
    """Float64 packing with the same layout, for real-arithmetic runs."""
    images = []
    for core_id, (start, count) in enumerate(plan.ranges):
        feats = np.ascontiguousarray(ds.features[start:start + count])
        labels = None
        if ds.labels is not None:
            labels = ds.labels[start:start + count].astype(np.float64)
        img = BankImage(count, ds.n_features, REAL_FRAC_SENTINEL, feats, labels, 8)
        if bank_bytes is not None and img.n_bytes > bank_bytes:
            raise CapacityError(
                f"core {core_id}: partition needs {img.n_bytes} B, bank holds {bank_bytes} B"
            )
        images.append(img)
    return images


def unpack_features(img: BankImage, fmt: QFormat) -> np.ndarray:
    """Dequantized feature matrix (test helper for the pack round trip)."""
    if img.frac_bits == REAL_FRAC_SENTINEL:
        return np.asarray(img.feature_raws, dtype=np.float64)
    return dequantize_array(img.feature_raws, fmt)


# ---------------------------------------------------------------------------
# CSV contract: comma separated, '.' decimal point, optional single header
# line (auto-detected: non-numeric first row), last column is the label.
# ---------------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def ingest_csv(path, has_labels: bool = True) -> Dataset:
    rows: list[list[float]] = []
    n_cols = None
    header_cols = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if lineno == 1 and not all(_is_number(c) for c in cells):
                header_cols = len(cells)
                continue
            if n_cols is None:
                n_cols = len(cells)
                if header_cols is not None and header_cols != n_cols:
                    raise PimmlError(f"{path}:{lineno}: row width {n_cols} != header width {header_cols}")
            elif len(cells) != n_cols:
                raise PimmlError(f"{path}:{lineno}: expected {n_cols} cells, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise PimmlError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    if not rows:
        if header_cols is None:
            raise PimmlError(f"{path}: empty file")
        width = header_cols - 1 if has_labels else header_cols
        return Dataset(np.empty((0, width)), np.empty((0,)) if has_labels else None)
    mat = np.array(rows, dtype=np.float64)
    if not has_labels:
        return Dataset(mat, None)
    if mat.shape[1] < 2:
        raise PimmlError(f"{path}: need at least one feature column plus a label column")
    return Dataset(mat[:, :-1], mat[:, -1])


def write_csv(ds: Dataset, path, header: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            names = [f"f{i}" for i in range(ds.n_features)] + ["y"]
            fh.write(",".join(names) + "\n")
        labels = ds.labels if ds.labels is not None else np.zeros(ds.n_rows)
        for i in range(ds.n_rows):
            cells = [repr(float(v)) for v in ds.features[i]]
            cells.append(repr(float(labels[i])))
            fh.write(",".join(cells) + "\n")


def minmax_scale(ds: Dataset, lo: float = -1.0, hi: float = 1.0) -> Dataset:
    """Per-feature min-max scaling to [lo, hi]; constant features map to lo."""
    fmin = ds.features.min(axis=0)
    fmax = ds.features.max(axis=0)
    span = fmax - fmin
    span[span == 0] = 1.0
    scaled = lo + (ds.features - fmin) * ((hi - lo) / span)
    return Dataset(scaled, None if ds.labels is None else ds.labels.copy())


# ---------------------------------------------------------------------------
# Synthetic generators (deterministic under a fixed seed).
# ---------------------------------------------------------------------------


def synth_linear(n: int, d: int, noise_sigma: float, seed: int):
    """Uniform features in [-4, 4], labels X @ w_true + gaussian noise."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-SYNTH_FEATURE_BOUND, SYNTH_FEATURE_BOUND, size=(n, d))
    w_true = rng.uniform(-1.0, 1.0, size=d)
    y = x @ w_true
    if noise_sigma > 0:
        y = y + noise_sigma * rng.standard_normal(n)
    return Dataset(x, y), w_true


def synth_blobs(n: int, d: int, k: int, spread: float, seed: int):
    """Gaussian blobs around k random centers; labels are cluster ids."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-3.0, 3.0, size=(k, d))
    labels = rng.integers(0, k, size=n)
    x = centers[labels]
    if spread > 0:
        x = x + spread * rng.standard_normal((n, d))
    x = np.clip(x, -SYNTH_FEATURE_BOUND, SYNTH_FEATURE_BOUND)
    return Dataset(x, labels.astype(np.int64)), centers


def synth_labels_tree(n: int, d: int, depth: int, seed: int) -> Dataset:
    """Uniform features labeled by a random axis-aligned binary rule."""
    rng = np.random.default_rng(seed)

    def make_rule(level: int):
        if level >= depth:
            cls = int(rng.integers(0, 2))
            return ("leaf", cls)
        feat = int(rng.integers(0, d))
        thr = float(rng.uniform(-2.5, 2.5))
        return ("split", feat, thr, make_rule(level + 1), make_rule(level + 1))

    rule = make_rule(0)
    x = rng.uniform(-SYNTH_FEATURE_BOUND, SYNTH_FEATURE_BOUND, size=(n, d))

    def apply_rule(row):
        node = rule
        while node[0] == "split":
            _, feat, thr, left, right = node
            node = left if row[feat] <= thr else right
        return node[1]

    labels = np.array([apply_rule(row) for row in x], dtype=np.int64)
    return Dataset(x, labels)
