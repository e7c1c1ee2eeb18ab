"""INI configuration for the bench CLI.

Sections: [device], [arith], [train], [lut].  Every key has a default; CLI
flags override config values.  The config path can come from the PIMML_CONFIG
environment variable.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .fixedpoint import Q16_16, QFormat
from .lut import DEFAULT_SIGMOID_ENTRIES, DEFAULT_SIGMOID_HI, DEFAULT_SIGMOID_LO
from .pimsim import DEFAULT_COST_TABLE, PimConfig

ENV_CONFIG = "PIMML_CONFIG"


@dataclass
class BenchConfig:
    device: PimConfig = field(default_factory=PimConfig)
    fmt: QFormat = Q16_16
    mode: str = "fixed"
    learning_rate: float = 0.0625
    iterations: int = 50
    k: int = 4
    max_depth: int = 4
    min_samples: int = 2
    n_bins: int = 32
    lut_lo: float = DEFAULT_SIGMOID_LO
    lut_hi: float = DEFAULT_SIGMOID_HI
    lut_entries: int = DEFAULT_SIGMOID_ENTRIES


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}={raw!r}: {exc}") from exc


def load_config(path: str | None = None) -> BenchConfig:
    """Load the INI file (or defaults); a missing explicit path is an error."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    cfg = BenchConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    cost = dict(DEFAULT_COST_TABLE)
    cost["mul32"] = _get(parser, "device", "mul32_cycles", int, cost["mul32"])
    device = PimConfig(
        n_cores=_get(parser, "device", "cores", int, 2524),
        clock_hz=_get(parser, "device", "clock_hz", int, 425_000_000),
        bank_bytes=_get(parser, "device", "bank_bytes", int, 64 << 20),
        scratchpad_bytes=_get(parser, "device", "scratchpad_bytes", int, 64 << 10),
        n_ranks=_get(parser, "device", "ranks", int, 40),
        cycles_per_op=cost,
        dma_latency_cycles=_get(parser, "device", "dma_alpha", int, 100),
        dma_bytes_per_cycle=_get(parser, "device", "dma_beta", int, 8),
        host_link_bytes_per_sec=_get(parser, "device", "link_bytes_per_sec", float, 1e9),
    )
    device.validate()

    try:
        fmt = QFormat.parse(_get(parser, "arith", "fmt", str, "q16.16"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mode = _get(parser, "arith", "mode", str, "fixed")
    if mode not in ("fixed", "real"):
        raise ConfigError(f"[arith] mode must be fixed or real, got {mode!r}")

    return BenchConfig(
        device=device,
        fmt=fmt,
        mode=mode,
        learning_rate=_get(parser, "train", "lr", float, 0.0625),
        iterations=_get(parser, "train", "iterations", int, 50),
        k=_get(parser, "train", "k", int, 4),
        max_depth=_get(parser, "train", "max_depth", int, 4),
        min_samples=_get(parser, "train", "min_samples", int, 2),
        n_bins=_get(parser, "train", "n_bins", int, 32),
        lut_lo=_get(parser, "lut", "lo", float, DEFAULT_SIGMOID_LO),
        lut_hi=_get(parser, "lut", "hi", float, DEFAULT_SIGMOID_HI),
        lut_entries=_get(parser, "lut", "entries", int, DEFAULT_SIGMOID_ENTRIES),
    )
