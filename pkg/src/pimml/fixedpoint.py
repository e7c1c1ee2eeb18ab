"""Bit-exact signed fixed-point arithmetic with saturation and wide accumulation.

Scalars are plain Python integers wrapped in small frozen dataclasses, so every
operation is exact and reproducible.  Vector helpers (numpy int64) exist for
the simulated kernels; they follow the same rounding/saturation rules and
detect 64-bit accumulator overflow instead of wrapping.

Rounding is round-to-nearest, ties to even, everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import FixedPointOverflowError, FormatMismatchError

_ALLOWED_TOTAL_BITS = (8, 16, 32)

ACC_BITS = 64
_ACC_MIN = -(1 << (ACC_BITS - 1))
_ACC_MAX = (1 << (ACC_BITS - 1)) - 1


@dataclass(frozen=True)
class QFormat:
    """Signed two's-complement fixed-point format: value = raw * 2**-frac_bits."""

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits not in _ALLOWED_TOTAL_BITS:
            raise ValueError(f"total_bits must be one of {_ALLOWED_TOTAL_BITS}, got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(f"frac_bits must be in [0, {self.total_bits}), got {self.frac_bits}")

    @property
    def int_bits(self) -> int:
        return self.total_bits - self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.raw_min / (1 << self.frac_bits)

    @property
    def max_value(self) -> float:
        return self.raw_max / (1 << self.frac_bits)

    @property
    def resolution(self) -> float:
        """One ulp: 2**-frac_bits."""
        return 1.0 / (1 << self.frac_bits)

    @property
    def elem_bytes(self) -> int:
        return self.total_bits // 8

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        """Parse the config spelling 'q<int>.<frac>', e.g. 'q16.16'."""
        s = text.strip().lower()
        if not s.startswith("q") or "." not in s:
            raise ValueError(f"bad Q-format string {text!r}, expected 'q<int>.<frac>'")
        try:
            int_part, frac_part = s[1:].split(".", 1)
            m, n = int(int_part), int(frac_part)
        except ValueError as exc:
            raise ValueError(f"bad Q-format string {text!r}") from exc
        return cls(m + n, n)

    def __str__(self) -> str:
        return f"q{self.int_bits}.{self.frac_bits}"


Q16_16 = QFormat(32, 16)
Q8_8 = QFormat(16, 8)


def _saturate(raw: int, fmt: QFormat) -> int:
    if raw > fmt.raw_max:
        return fmt.raw_max
    if raw < fmt.raw_min:
        return fmt.raw_min
    return raw


def round_shift(value: int, shift: int) -> int:
    """Arithmetic right shift by `shift` with round-to-nearest-even.

    Negative shift is an exact left shift.
    """
    if shift <= 0:
        return value << (-shift)
    q = value >> shift
    rem = value - (q << shift)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and (q & 1)):
        q += 1
    return q


def div_round_half_even(num: int, den: int) -> int:
    """num / den with round-to-nearest-even; den must be positive."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and (q & 1)):
        q += 1
    return q


@dataclass(frozen=True)
class FixedScalar:
    raw: int
    fmt: QFormat

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise ValueError(f"raw {self.raw} does not fit {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw / (1 << self.fmt.frac_bits)


@dataclass(frozen=True)
class WideAccumulator:
    """64-bit accumulator for sums of fixed-point products (frac = 2 * input frac)."""

    raw: int = 0
    frac_bits: int = 0

    def __post_init__(self):
        if not _ACC_MIN <= self.raw <= _ACC_MAX:
            raise FixedPointOverflowError(f"accumulator raw {self.raw} exceeds 64 bits")

    @property
    def value(self) -> float:
        return self.raw / (1 << self.frac_bits) if self.frac_bits else float(self.raw)


def safe_term_count(magnitude_log2: int, fmt: QFormat) -> int:
    """Number of product terms guaranteed not to overflow the accumulator.

    For inputs bounded by |x| <= 2**magnitude_log2, each product raw fits in
    2*(magnitude_log2 + frac_bits) bits, so 2**(62 - 2*(B + frac)) terms are safe.
    """
    exp = 62 - 2 * (magnitude_log2 + fmt.frac_bits)
    return 1 << exp if exp > 0 else 1 if exp == 0 else 0


def quantize(x: float, fmt: QFormat) -> FixedScalar:
    """Round-to-nearest-even of x * 2**frac_bits, saturated to the format range."""
    if math.isnan(x):
        raise ValueError("cannot quantize NaN")
    if math.isinf(x):
        return FixedScalar(fmt.raw_max if x > 0 else fmt.raw_min, fmt)
    scaled = x * (1 << fmt.frac_bits)  # power-of-two scaling, exact in double
    if scaled >= fmt.raw_max:
        raw = fmt.raw_max
    elif scaled <= fmt.raw_min:
        raw = fmt.raw_min
    else:
        raw = round(scaled)
    return FixedScalar(_saturate(raw, fmt), fmt)


def _frac_of(v: Union[FixedScalar, WideAccumulator]) -> int:
    return v.fmt.frac_bits if isinstance(v, FixedScalar) else v.frac_bits


def dequantize(v: Union[FixedScalar, WideAccumulator]) -> float:
    """Exact real value raw * 2**-frac_bits (as a double)."""
    frac = _frac_of(v)
    return v.raw / (1 << frac) if frac else float(v.raw)


def _check_fmt(a: FixedScalar, b: FixedScalar) -> QFormat:
    if a.fmt != b.fmt:
        raise FormatMismatchError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return a.fmt


def fx_add(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _check_fmt(a, b)
    return FixedScalar(_saturate(a.raw + b.raw, fmt), fmt)


def fx_sub(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _check_fmt(a, b)
    return FixedScalar(_saturate(a.raw - b.raw, fmt), fmt)


def fx_mul(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    """Widened product, round-to-nearest-even rescale, saturate."""
    fmt = _check_fmt(a, b)
    wide = a.raw * b.raw  # exact, fits 2x width
    return FixedScalar(_saturate(round_shift(wide, fmt.frac_bits), fmt), fmt)


def dot_accumulate(
    a: Sequence[FixedScalar], b: Sequence[FixedScalar], acc: WideAccumulator
) -> WideAccumulator:
    """acc += sum(raw_a[i] * raw_b[i]) with no intermediate rounding.

    Accumulator overflow beyond 64 bits is a hard error, never a silent wrap.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        return acc
    fmt = _check_fmt(a[0], b[0])
    prod_frac = 2 * fmt.frac_bits
    if acc.raw != 0 and acc.frac_bits != prod_frac:
        raise FormatMismatchError(
            f"accumulator frac_bits {acc.frac_bits} incompatible with product frac {prod_frac}"
        )
    total = acc.raw
    for x, y in zip(a, b):
        _check_fmt(x, y)
        total += x.raw * y.raw
        if not _ACC_MIN <= total <= _ACC_MAX:
            raise FixedPointOverflowError("64-bit accumulator overflow in dot_accumulate")
    return WideAccumulator(total, prod_frac)


def rescale(v: Union[FixedScalar, WideAccumulator], new_fmt: QFormat) -> FixedScalar:
    """Shift to the new fraction position with round-to-nearest-even, saturate."""
    raw = round_shift(v.raw, _frac_of(v) - new_fmt.frac_bits)
    return FixedScalar(_saturate(raw, new_fmt), new_fmt)


# ---------------------------------------------------------------------------
# Vectorized helpers (same semantics, numpy int64 raws) used by the kernels.
# ---------------------------------------------------------------------------


def quantize_array(x: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Vectorized quantize; returns int64 raws."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("cannot quantize NaN")
    scaled = x * float(1 << fmt.frac_bits)
    raw = np.rint(np.clip(scaled, fmt.raw_min, fmt.raw_max)).astype(np.int64)
    return np.clip(raw, fmt.raw_min, fmt.raw_max)


def dequantize_array(raw: np.ndarray, fmt: QFormat) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / float(1 << fmt.frac_bits)


def saturate_array(raw: np.ndarray, fmt: QFormat) -> np.ndarray:
    return np.clip(raw, fmt.raw_min, fmt.raw_max)


def round_shift_array(v: np.ndarray, shift: int) -> np.ndarray:
    """Vectorized round_shift (round-to-nearest-even arithmetic shift)."""
    v = np.asarray(v, dtype=np.int64)
    if shift <= 0:
        return v << (-shift)
    q = v >> shift
    rem = v - (q << shift)
    half = np.int64(1 << (shift - 1))
    up = (rem > half) | ((rem == half) & ((q & 1) == 1))
    return q + up.astype(np.int64)


def checked_matvec_raw(x_raw: np.ndarray, w_raw: np.ndarray) -> np.ndarray:
    """Per-row dot of int64 raws; raises if an int64 overflow cannot be ruled out.

    Result carries frac = 2 * input frac, with no intermediate rounding.
    """
    x_raw = np.asarray(x_raw, dtype=np.int64)
    w_raw = np.asarray(w_raw, dtype=np.int64)
    d = w_raw.shape[0]
    if x_raw.size and d:
        bound = int(np.abs(x_raw).max()) * int(np.abs(w_raw).max()) * d
        if bound >= 1 << 62:
            raise FixedPointOverflowError("per-row dot may overflow 64-bit accumulation")
    return x_raw @ w_raw


def checked_weighted_colsum_raw(x_raw: np.ndarray, e_raw: np.ndarray) -> np.ndarray:
    """sum over rows of e[i] * x[i, :] in exact int64; overflow is detected."""
    x_raw = np.asarray(x_raw, dtype=np.int64)
    e_raw = np.asarray(e_raw, dtype=np.int64)
    n = x_raw.shape[0]
    if n:
        bound = int(np.abs(x_raw).max()) * int(np.abs(e_raw).max()) * n
        if bound >= 1 << 62:
            raise FixedPointOverflowError("weighted column sum may overflow 64-bit accumulation")
    return e_raw @ x_raw
