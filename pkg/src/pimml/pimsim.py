"""Simulated PIM machine: host + N bank-isolated cores with a cycle cost model.

Each core owns one bank and a small scratchpad; cores cannot address each
other, so all communication goes through explicit host transfers.  Costs are
charged per operation class via kernel hooks, DMA as latency + bytes/cycle,
and host-link transfers serialize within a rank but run in parallel across
ranks.  Per-iteration totals are combined analytically: serialized adds
compute and transfer, overlapped takes the max.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .errors import ConfigError, IsolationError, KernelLaunchError

DEFAULT_COST_TABLE = {"add32": 1, "mul32": 4, "cmp": 1, "lut_lookup": 2}


def _default_cost_table():
    return dict(DEFAULT_COST_TABLE)


@dataclass(frozen=True)
class PimConfig:
    n_cores: int = 2524
    clock_hz: int = 425_000_000
    bank_bytes: int = 64 << 20
    scratchpad_bytes: int = 64 << 10
    n_ranks: int = 40  # 2524 cores / 40 ranks -> 64 cores per rank (last rank padded)
    cycles_per_op: Mapping[str, int] = field(default_factory=_default_cost_table)
    dma_latency_cycles: int = 100
    dma_bytes_per_cycle: int = 8
    host_link_bytes_per_sec: float = 1e9
    host_cycles_per_op: int = 0

    def validate(self) -> None:
        if self.n_cores < 1:
            raise ConfigError(f"n_cores must be >= 1, got {self.n_cores}")
        if self.clock_hz <= 0:
            raise ConfigError("clock_hz must be positive")
        if self.bank_bytes <= 0 or self.scratchpad_bytes <= 0:
            raise ConfigError("bank and scratchpad sizes must be positive")
        if self.scratchpad_bytes >= self.bank_bytes:
            raise ConfigError("scratchpad_bytes must be smaller than bank_bytes")
        if self.n_ranks < 1:
            raise ConfigError("n_ranks must be >= 1")
        if self.dma_latency_cycles < 0 or self.dma_bytes_per_cycle <= 0:
            raise ConfigError("bad DMA parameters")
        if self.host_link_bytes_per_sec <= 0:
            raise ConfigError("host_link_bytes_per_sec must be positive")
        for op, cyc in self.cycles_per_op.items():
            if cyc < 0:
                raise ConfigError(f"negative cycle count for op class {op!r}")

    @property
    def cores_per_rank(self) -> int:
        return math.ceil(self.n_cores / self.n_ranks)

    def rank_of(self, core_id: int) -> int:
        return core_id // self.cores_per_rank

    def dma_cycles(self, nbytes: int) -> int:
        return self.dma_latency_cycles + math.ceil(nbytes / self.dma_bytes_per_cycle)


@dataclass
class TransferRecord:
    core_id: int
    direction: str  # "to_device" | "from_device"
    nbytes: int


class CoreContext:
    """Per-core view handed to a kernel; can only reach its own bank."""

    __slots__ = ("_device", "core_id", "compute_cycles", "dma_cycles")

    def __init__(self, device: "PimDevice", core_id: int):
        self._device = device
        self.core_id = core_id
        self.compute_cycles = 0
        self.dma_cycles = 0

    @property
    def config(self) -> PimConfig:
        return self._device.config

    def mram_read(self, offset: int, length: int) -> bytes:
        """Stream `length` bytes from the bank into a scratchpad buffer."""
        cfg = self._device.config
        if length > cfg.scratchpad_bytes:
            raise IsolationError(
                f"core {self.core_id}: read of {length} B exceeds scratchpad "
                f"({cfg.scratchpad_bytes} B)"
            )
        data = self._device._bank_read(self.core_id, offset, length)
        self.dma_cycles += cfg.dma_cycles(length)
        return data

    def mram_write(self, buf: bytes, offset: int) -> None:
        cfg = self._device.config
        if len(buf) > cfg.scratchpad_bytes:
            raise IsolationError(
                f"core {self.core_id}: write of {len(buf)} B exceeds scratchpad"
            )
        self._device._bank_write(self.core_id, offset, buf)
        self.dma_cycles += cfg.dma_cycles(len(buf))

    def charge(self, op_class: str, count: int) -> None:
        table = self._device.config.cycles_per_op
        if op_class not in table:
            raise ValueError(f"unknown op class {op_class!r}")
        self.compute_cycles += table[op_class] * count


class PimDevice:
    """Instantiated machine state: banks, transfer log, per-core counters."""

    def __init__(self, config: PimConfig):
        config.validate()
        self.config = config
        self._banks: list[bytearray] = [bytearray() for _ in range(config.n_cores)]
        self.transfer_log: list[TransferRecord] = []
        self.compute_cycles = [0] * config.n_cores
        self.dma_cycles = [0] * config.n_cores

    # -- raw bank access (shared by host transfers and core DMA) -------------

    def _check_range(self, core_id: int, offset: int, length: int) -> None:
        if not 0 <= core_id < self.config.n_cores:
            raise IsolationError(f"core id {core_id} out of range")
        if offset < 0 or length < 0 or offset + length > self.config.bank_bytes:
            raise IsolationError(
                f"core {core_id}: range [{offset}, {offset + length}) outside bank "
                f"of {self.config.bank_bytes} B"
            )

    def _bank_read(self, core_id: int, offset: int, length: int) -> bytes:
        self._check_range(core_id, offset, length)
        bank = self._banks[core_id]
        end = offset + length
        if offset >= len(bank):
            return bytes(length)
        chunk = bytes(bank[offset:min(end, len(bank))])
        if len(chunk) < length:
            chunk += bytes(length - len(chunk))  # untouched bank bytes read as zero
        return chunk

    def _bank_write(self, core_id: int, offset: int, payload: bytes) -> None:
        self._check_range(core_id, offset, len(payload))
        bank = self._banks[core_id]
        end = offset + len(payload)
        if end > len(bank):
            bank.extend(bytes(end - len(bank)))
        bank[offset:end] = payload

    # -- host-mediated transfers ---------------------------------------------

    def host_write_bank(self, core_id: int, offset: int, payload: bytes) -> None:
        self._bank_write(core_id, offset, bytes(payload))
        self.transfer_log.append(TransferRecord(core_id, "to_device", len(payload)))

    def host_read_bank(self, core_id: int, offset: int, length: int) -> bytes:
        data = self._bank_read(core_id, offset, length)
        self.transfer_log.append(TransferRecord(core_id, "from_device", length))
        return data

    def link_cycles(self, per_core_bytes: Mapping[int, int]) -> int:
        """Host-link time for one transfer phase, in PIM-clock cycles.

        Transfers serialize on the bus within a rank and run in parallel
        across ranks, so the phase takes as long as the busiest rank.
        """
        per_rank: dict[int, int] = {}
        for core_id, nbytes in per_core_bytes.items():
            rank = self.config.rank_of(core_id)
            per_rank[rank] = per_rank.get(rank, 0) + nbytes
        if not per_rank:
            return 0
        worst = max(per_rank.values())
        return math.ceil(worst / self.config.host_link_bytes_per_sec * self.config.clock_hz)

    def transfer_bytes(self) -> tuple[int, int]:
        to_dev = sum(r.nbytes for r in self.transfer_log if r.direction == "to_device")
        from_dev = sum(r.nbytes for r in self.transfer_log if r.direction == "from_device")
        return to_dev, from_dev


def create_device(cfg: PimConfig) -> PimDevice:
    return PimDevice(cfg)


@dataclass
class LaunchCost:
    compute_cycles: list[int]
    dma_cycles: list[int]

    def max_core_cycles(self) -> int:
        return max(
            (c + d for c, d in zip(self.compute_cycles, self.dma_cycles)), default=0
        )


def launch(
    dev: PimDevice,
    kernel: Callable[[CoreContext, object], object],
    args: Sequence[object],
    workers: int = 1,
) -> tuple[list[object], LaunchCost]:
    """Run `kernel(ctx, args[i])` once per core; results in ascending core order.

    Cores touch disjoint state, so any worker count yields identical results.
    A kernel exception aborts the launch with the failing core id attached.
    """
    if len(args) != dev.config.n_cores:
        raise ValueError(f"need {dev.config.n_cores} per-core args, got {len(args)}")
    ctxs = [CoreContext(dev, i) for i in range(dev.config.n_cores)]

    def run_one(core_id: int):
        try:
            return kernel(ctxs[core_id], args[core_id])
        except Exception as exc:
            raise KernelLaunchError(core_id, exc) from exc

    if workers <= 1:
        results = [run_one(i) for i in range(dev.config.n_cores)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, range(dev.config.n_cores)))

    cost = LaunchCost(
        [ctx.compute_cycles for ctx in ctxs], [ctx.dma_cycles for ctx in ctxs]
    )
    for i, ctx in enumerate(ctxs):
        dev.compute_cycles[i] += ctx.compute_cycles
        dev.dma_cycles[i] += ctx.dma_cycles
    return results, cost


@dataclass
class KernelReport:
    """Per-run accounting aggregated over all training iterations."""

    compute_cycles: list[int]
    dma_cycles: list[int]
    to_device_bytes: int
    from_device_bytes: int
    host_transfer_cycles: int
    serialized_total_cycles: int
    overlapped_total_cycles: int
    iterations: int

    @property
    def max_compute_cycles(self) -> int:
        return max(self.compute_cycles, default=0)

    @property
    def max_dma_cycles(self) -> int:
        return max(self.dma_cycles, default=0)


def finalize_report(
    dev: PimDevice,
    iteration_costs: Sequence[tuple[int, int]],
    iterations: Optional[int] = None,
    prologue_cycles: int = 0,
) -> KernelReport:
    """Combine per-iteration (core_cycles, transfer_cycles) into totals.

    serialized sums compute and transfer each iteration; overlapped takes
    their max.  A data-load prologue (no compute to hide it behind) adds to
    both, so overlapped <= serialized always holds.
    """
    serialized = prologue_cycles
    overlapped = prologue_cycles
    transfer_total = prologue_cycles
    for core_cyc, xfer_cyc in iteration_costs:
        serialized += core_cyc + xfer_cyc
        overlapped += max(core_cyc, xfer_cyc)
        transfer_total += xfer_cyc
    to_dev, from_dev = dev.transfer_bytes()
    return KernelReport(
        compute_cycles=list(dev.compute_cycles),
        dma_cycles=list(dev.dma_cycles),
        to_device_bytes=to_dev,
        from_device_bytes=from_dev,
        host_transfer_cycles=transfer_total,
        serialized_total_cycles=serialized,
        overlapped_total_cycles=overlapped,
        iterations=iterations if iterations is not None else len(iteration_costs),
    )
