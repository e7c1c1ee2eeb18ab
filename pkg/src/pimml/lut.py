"""Lookup tables for nonlinear activations on cores without native support.

A table samples f uniformly on [lo, hi], quantizes each sample, and is
evaluated by nearest-entry lookup (one multiply + one shift on the simulated
core).  Out-of-domain inputs clamp to the end entries.  Linear interpolation
exists as an opt-in mode but nearest lookup is the default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fixedpoint import FixedScalar, QFormat, Q16_16, dequantize_array, quantize_array

DEFAULT_SIGMOID_LO = -8.0
DEFAULT_SIGMOID_HI = 8.0
DEFAULT_SIGMOID_ENTRIES = 4096
SIGMOID_LIPSCHITZ = 0.25


def sigmoid(x):
    """Numerically stable logistic function, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LutTable:
    lo: float
    hi: float
    n_entries: int
    out_fmt: QFormat
    raws: np.ndarray  # int64 raws, length n_entries

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_entries - 1)

    @property
    def n_bytes(self) -> int:
        return self.n_entries * self.out_fmt.elem_bytes

    def entry(self, i: int) -> FixedScalar:
        return FixedScalar(int(self.raws[i]), self.out_fmt)

    def values(self) -> np.ndarray:
        """Dequantized entries as doubles."""
        return dequantize_array(self.raws, self.out_fmt)


def build_lut(f: Callable, lo: float, hi: float, n: int, fmt: QFormat) -> LutTable:
    """Sample f at n uniform points on [lo, hi] and quantize.

    n must be a power of two >= 2 so the index math is a shift on hardware.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if n < 2 or n & (n - 1):
        raise ValueError(f"n_entries must be a power of two >= 2, got {n}")
    xs = np.linspace(lo, hi, n)
    ys = np.asarray(f(xs), dtype=np.float64)
    if ys.shape != xs.shape:
        ys = np.array([f(x) for x in xs], dtype=np.float64)
    if not np.isfinite(ys).all():
        raise ValueError("function produced a non-finite sample on the table domain")
    return LutTable(float(lo), float(hi), n, fmt, quantize_array(ys, fmt))


def lut_index(t: LutTable, x: float) -> int:
    i = round((x - t.lo) / t.step)
    return min(max(i, 0), t.n_entries - 1)


def lut_eval(t: LutTable, x: FixedScalar) -> FixedScalar:
    """Nearest-entry lookup; values outside [lo, hi] clamp to the end entries."""
    return t.entry(lut_index(t, x.value))


def lut_eval_raw(t: LutTable, raw: np.ndarray, in_fmt: QFormat) -> np.ndarray:
    """Vectorized nearest-entry lookup on int raws; returns out_fmt raws."""
    x = dequantize_array(raw, in_fmt)
    idx = np.rint((x - t.lo) / t.step).astype(np.int64)
    np.clip(idx, 0, t.n_entries - 1, out=idx)
    return t.raws[idx]


def lut_eval_interp(t: LutTable, x: FixedScalar) -> float:
    """Opt-in linear interpolation between the two neighboring entries."""
    pos = (x.value - t.lo) / t.step
    i0 = int(np.floor(pos))
    if i0 < 0:
        return float(t.values()[0])
    if i0 >= t.n_entries - 1:
        return float(t.values()[-1])
    frac = pos - i0
    v = t.values()
    return float(v[i0] * (1.0 - frac) + v[i0 + 1] * frac)


def lut_max_error(t: LutTable, f: Callable, n_samples: int) -> float:
    """Max |table(x) - f(x)| over a uniform dense scan of [lo, hi], in doubles."""
    if n_samples < t.n_entries:
        raise ValueError("n_samples must be >= n_entries")
    xs = np.linspace(t.lo, t.hi, n_samples)
    idx = np.rint((xs - t.lo) / t.step).astype(np.int64)
    np.clip(idx, 0, t.n_entries - 1, out=idx)
    approx = dequantize_array(t.raws[idx], t.out_fmt)
    exact = np.asarray(f(xs), dtype=np.float64)
    return float(np.abs(approx - exact).max())


def lut_error_bound(t: LutTable, lipschitz: float) -> float:
    """Analytic bound for Lipschitz f: L*h/2 plus the half-ulp quantization term."""
    return lipschitz * t.step / 2.0 + 0.5 * t.out_fmt.resolution


def default_sigmoid_table(
    fmt: QFormat = Q16_16,
    lo: float = DEFAULT_SIGMOID_LO,
    hi: float = DEFAULT_SIGMOID_HI,
    n: int = DEFAULT_SIGMOID_ENTRIES,
) -> LutTable:
    return build_lut(sigmoid, lo, hi, n, fmt)
