"""Shared plumbing for the host-orchestrated training kernels.

Training data is packed once into per-core bank images and stays there; each
iteration the host broadcasts the current model parameters, launches the
per-core kernel, and gathers partial results through the bank.

Real-arithmetic runs reduce over fixed 256-row "virtual blocks" so results do
not depend on how rows were split across cores: cores compute partials only
for blocks that lie entirely inside their partition, and the host computes
the few straddling blocks itself from its own dataset copy.  Block sums use
exact (fsum) summation, making the combined result identical for any core
count.  Fixed-point runs are integer-exact, so no such care is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import CapacityError, ConfigError
from ..fixedpoint import Q16_16, QFormat
from ..layout import (
    HEADER_BYTES,
    BankImage,
    Dataset,
    PartitionPlan,
    pack_partition,
    pack_partition_real,
    partition_rows,
)
from ..pimsim import PimDevice

BLOCK_ROWS = 256

MODE_FIXED = "fixed"
MODE_REAL = "real"


@dataclass
class Hyperparams:
    learning_rate: float = 0.0625
    iterations: int = 50
    k: int = 4
    max_depth: int = 4
    min_samples: int = 2
    n_bins: int = 32
    mode: str = MODE_FIXED
    fmt: QFormat = Q16_16

    def __post_init__(self):
        if self.mode not in (MODE_FIXED, MODE_REAL):
            raise ConfigError(f"mode must be 'fixed' or 'real', got {self.mode!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")

    @property
    def lr_shift(self) -> int:
        """Fixed mode applies the learning rate as a power-of-two right shift."""
        shift = round(-math.log2(self.learning_rate))
        if shift < 0:
            raise ConfigError("fixed-mode learning rate must be <= 1")
        return shift


@dataclass
class PackedDataset:
    dataset: Dataset
    plan: PartitionPlan
    mode: str
    fmt: QFormat
    images: list[BankImage]
    data_end: list[int]  # first free bank byte after each core's image
    load_cycles: int

    @property
    def elem_bytes(self) -> int:
        return 8 if self.mode == MODE_REAL else self.fmt.elem_bytes

    @property
    def n_rows(self) -> int:
        return self.dataset.n_rows

    @property
    def n_features(self) -> int:
        return self.dataset.n_features

    def active_cores(self) -> list[int]:
        return [i for i, (_, c) in enumerate(self.plan.ranges) if c > 0]


def load_dataset(dev: PimDevice, ds: Dataset, hp: Hyperparams) -> PackedDataset:
    """Partition, pack, and copy the dataset into the device banks."""
    plan = partition_rows(ds.n_rows, dev.config.n_cores)
    if hp.mode == MODE_REAL:
        images = pack_partition_real(ds, plan, dev.config.bank_bytes)
    else:
        images = pack_partition(ds, plan, hp.fmt, dev.config.bank_bytes)
    data_end = []
    per_core_bytes = {}
    for core_id, img in enumerate(images):
        blob = img.to_bytes()
        dev.host_write_bank(core_id, 0, blob)
        data_end.append(_align8(len(blob)))
        per_core_bytes[core_id] = len(blob)
    load_cycles = dev.link_cycles(per_core_bytes)
    return PackedDataset(ds, plan, hp.mode, hp.fmt, images, data_end, load_cycles)


def _align8(offset: int) -> int:
    return (offset + 7) & ~7


def plan_regions(
    packed: PackedDataset, dev: PimDevice, sizes: list[tuple[str, list[int]]]
) -> list[dict[str, int]]:
    """Lay out named regions after each core's data image; check bank capacity."""
    out = []
    for core_id in range(packed.plan.n_cores):
        offsets = {}
        cursor = packed.data_end[core_id]
        for name, per_core in sizes:
            offsets[name] = cursor
            cursor = _align8(cursor + per_core[core_id])
        if cursor > dev.config.bank_bytes:
            raise CapacityError(
                f"core {core_id}: regions need {cursor} B, bank holds {dev.config.bank_bytes} B"
            )
        out.append(offsets)
    return out


# ---------------------------------------------------------------------------
# Virtual-block bookkeeping for the canonical real-mode reduction.
# ---------------------------------------------------------------------------


def whole_blocks_for(row_start: int, row_count: int, n_rows: int) -> list[tuple[int, int]]:
    """Virtual blocks [lo, hi) fully contained in [row_start, row_start+row_count)."""
    blocks = []
    if row_count <= 0:
        return blocks
    b = (row_start + BLOCK_ROWS - 1) // BLOCK_ROWS
    end = row_start + row_count
    while True:
        lo = b * BLOCK_ROWS
        hi = min(lo + BLOCK_ROWS, n_rows)
        if lo >= end or hi > end or lo >= hi:
            break
        blocks.append((lo, hi))
        b += 1
    return blocks


def all_blocks(n_rows: int) -> list[tuple[int, int]]:
    return [
        (lo, min(lo + BLOCK_ROWS, n_rows)) for lo in range(0, n_rows, BLOCK_ROWS)
    ]


def boundary_blocks(plan: PartitionPlan, n_rows: int) -> list[tuple[int, int]]:
    """Blocks straddling a partition boundary; the host reduces these itself."""
    whole = set()
    for start, count in plan.ranges:
        whole.update(whole_blocks_for(start, count, n_rows))
    return [blk for blk in all_blocks(n_rows) if blk not in whole]


def fsum_columns(mat: np.ndarray) -> np.ndarray:
    """Exact per-column sum of a (rows, d) float64 matrix."""
    return np.array([math.fsum(mat[:, j]) for j in range(mat.shape[1])])


def block_gd_partial(x: np.ndarray, y: np.ndarray, w: np.ndarray, logistic: bool) -> np.ndarray:
    """Gradient contribution of one block: sum_rows x * (pred - y), exact sum."""
    z = x @ w
    if logistic:
        err = stable_sigmoid(z) - y
    else:
        err = z - y
    return fsum_columns(x * err[:, None])


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    """Piecewise-stable logistic; kernels and oracles share this exact form."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def distances_sq(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances (rows, k); one centroid at a time."""
    out = np.empty((x.shape[0], centroids.shape[0]))
    for j in range(centroids.shape[0]):
        diff = x - centroids[j]
        out[:, j] = (diff * diff).sum(axis=1)
    return out


@dataclass
class CoreDataView:
    """Addresses a kernel needs to stream its local rows."""

    row_start: int
    row_count: int
    n_features: int
    elem_bytes: int
    frac_bits: Optional[int]  # None in real mode
    labels_offset: int

    def feature_bytes(self, lo: int, hi: int) -> tuple[int, int]:
        """(bank offset, byte length) of local rows [lo, hi)."""
        row_bytes = self.n_features * self.elem_bytes
        return HEADER_BYTES + lo * row_bytes, (hi - lo) * row_bytes

    def label_bytes(self, lo: int, hi: int) -> tuple[int, int]:
        return self.labels_offset + lo * self.elem_bytes, (hi - lo) * self.elem_bytes


def core_views(packed: PackedDataset) -> list[CoreDataView]:
    views = []
    for (start, count), img in zip(packed.plan.ranges, packed.images):
        frac = None if packed.mode == MODE_REAL else packed.fmt.frac_bits
        views.append(
            CoreDataView(start, count, packed.n_features, packed.elem_bytes, frac, img.labels_offset)
        )
    return views


def decode_features(view: CoreDataView, raw: bytes, rows: int) -> np.ndarray:
    """Bank bytes -> (rows, d) array: float64 in real mode, int64 raws in fixed."""
    if view.frac_bits is None:
        return np.frombuffer(raw, dtype="<f8").reshape(rows, view.n_features)
    dt = {1: "<i1", 2: "<i2", 4: "<i4"}[view.elem_bytes]
    return np.frombuffer(raw, dtype=dt).astype(np.int64).reshape(rows, view.n_features)


def decode_labels(view: CoreDataView, raw: bytes) -> np.ndarray:
    if view.frac_bits is None:
        return np.frombuffer(raw, dtype="<f8")
    dt = {1: "<i1", 2: "<i2", 4: "<i4"}[view.elem_bytes]
    return np.frombuffer(raw, dtype=dt).astype(np.int64)


def chunk_ranges(row_count: int, rows_per_chunk: int) -> list[tuple[int, int]]:
    return [
        (lo, min(lo + rows_per_chunk, row_count))
        for lo in range(0, row_count, rows_per_chunk)
    ]


def mram_read_chunks(ctx, offset: int, length: int) -> bytes:
    """Stream a range larger than the scratchpad as sequential chunked DMA."""
    step = ctx.config.scratchpad_bytes
    parts = []
    for lo in range(0, length, step):
        parts.append(ctx.mram_read(offset + lo, min(step, length - lo)))
    return b"".join(parts)


def mram_write_chunks(ctx, buf: bytes, offset: int) -> None:
    step = ctx.config.scratchpad_bytes
    for lo in range(0, len(buf), step):
        ctx.mram_write(buf[lo:lo + step], offset + lo)


def bin_indices(x: np.ndarray, lo: np.ndarray, width: np.ndarray, n_bins: int) -> np.ndarray:
    """Uniform-width bin index per (row, feature); constant features bin to 0."""
    w = np.where(width > 0, width, 1.0)
    bins = np.floor((x - lo) / w).astype(np.int64)
    bins[:, width <= 0] = 0
    return np.clip(bins, 0, n_bins - 1)
