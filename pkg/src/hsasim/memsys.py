"""External-memory traffic accounting, bandwidth-limited latency, and energy.

Latency per phase is max(compute time, DRAM transfer time): weight SRAMs are
double-buffered against DRAM prefetch, so transfer latency is never exposed
unless bandwidth is the binding constraint, in which case the difference
shows up as stall cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MemConfig:
    """Memory-system bandwidth and energy constants.

    The DRAM numbers model a DDR5 edge configuration (51.2 GB/s, 32 pJ/B).
    On-chip constants are calibration values: the modeled design publishes
    only system-level power, so SRAM and MAC energies are config with
    documented defaults rather than measured quantities.
    """

    dram_bandwidth_bytes_per_s: float = 51.2e9
    dram_energy_pj_per_byte: float = 32.0
    sram_energy_pj_per_byte: float = 1.0
    mac_energy_pj: float = 0.25
    static_power_w: float = 0.108

    def __post_init__(self) -> None:
        if self.dram_bandwidth_bytes_per_s <= 0:
            raise ConfigError("dram bandwidth must be positive")
        for name in (
            "dram_energy_pj_per_byte",
            "sram_energy_pj_per_byte",
            "mac_energy_pj",
            "static_power_w",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


@dataclass
class TrafficLedger:
    """Byte/op counters for one simulation phase. Monotone non-decreasing."""

    dram_bytes_weights: int = 0
    dram_bytes_activations: int = 0
    dram_bytes_state: int = 0
    sram_reads: dict = field(default_factory=dict)  # structure -> bytes
    sram_writes: dict = field(default_factory=dict)
    mac_ops: int = 0
    enabled_pe_cycles: int = 0

    def add_dram(self, kind: str, nbytes: int) -> None:
        self._check(nbytes)
        key = f"dram_bytes_{kind}"
        if not hasattr(self, key):
            raise KeyError(f"unknown DRAM traffic kind {kind!r}")
        setattr(self, key, getattr(self, key) + int(nbytes))

    def add_sram_read(self, structure: str, nbytes: int) -> None:
        self._check(nbytes)
        self.sram_reads[structure] = self.sram_reads.get(structure, 0) + int(nbytes)

    def add_sram_write(self, structure: str, nbytes: int) -> None:
        self._check(nbytes)
        self.sram_writes[structure] = self.sram_writes.get(structure, 0) + int(nbytes)

    def add_macs(self, n: int) -> None:
        self._check(n)
        self.mac_ops += int(n)

    def add_enabled_pe_cycles(self, n: int) -> None:
        self._check(n)
        self.enabled_pe_cycles += int(n)

    @staticmethod
    def _check(n) -> None:
        if n < 0:
            raise ValueError("ledger counters are monotone non-decreasing")

    @property
    def dram_bytes_total(self) -> int:
        return self.dram_bytes_weights + self.dram_bytes_activations + self.dram_bytes_state

    @property
    def sram_bytes_total(self) -> int:
        return sum(self.sram_reads.values()) + sum(self.sram_writes.values())

    def merged(self, other: "TrafficLedger") -> "TrafficLedger":
        out = TrafficLedger(
            dram_bytes_weights=self.dram_bytes_weights + other.dram_bytes_weights,
            dram_bytes_activations=self.dram_bytes_activations + other.dram_bytes_activations,
            dram_bytes_state=self.dram_bytes_state + other.dram_bytes_state,
            mac_ops=self.mac_ops + other.mac_ops,
            enabled_pe_cycles=self.enabled_pe_cycles + other.enabled_pe_cycles,
        )
        for src in (self, other):
            for k, v in src.sram_reads.items():
                out.sram_reads[k] = out.sram_reads.get(k, 0) + v
            for k, v in src.sram_writes.items():
                out.sram_writes[k] = out.sram_writes.get(k, 0) + v
        return out


@dataclass(frozen=True)
class PhaseTiming:
    """Resolved latency of one phase under the overlap model."""

    seconds: float
    compute_seconds: float
    memory_seconds: float
    stall_cycles: int

    @property
    def memory_bound(self) -> bool:
        return self.memory_seconds > self.compute_seconds


def phase_latency(
    compute_cycles: int,
    dram_bytes: int,
    cfg: MemConfig,
    clock_hz: float = 5.0e8,
) -> PhaseTiming:
    """max(compute, memory) with perfect double-buffered prefetch overlap.

    Stall cycles are the compute clock ticks spent waiting for DRAM when the
    transfer time exceeds the compute time; zero in the compute-bound case.
    """
    compute_s = compute_cycles / clock_hz
    memory_s = dram_bytes / cfg.dram_bandwidth_bytes_per_s
    seconds = max(compute_s, memory_s)
    stalls = int(np.ceil((memory_s - compute_s) * clock_hz)) if memory_s > compute_s else 0
    return PhaseTiming(
        seconds=seconds,
        compute_seconds=compute_s,
        memory_seconds=memory_s,
        stall_cycles=stalls,
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Itemized phase energy in joules. The items sum to the total exactly."""

    dram_j: float
    sram_j: float
    mac_j: float
    static_j: float

    @property
    def total_j(self) -> float:
        return self.dram_j + self.sram_j + self.mac_j + self.static_j

    def as_dict(self) -> dict:
        return {
            "dram_j": self.dram_j,
            "sram_j": self.sram_j,
            "mac_j": self.mac_j,
            "static_j": self.static_j,
            "total_j": self.total_j,
        }


def phase_energy(ledger: TrafficLedger, seconds: float, cfg: MemConfig) -> EnergyBreakdown:
    """E = bytes x pJ/B per memory level + MACs x pJ + static power x time."""
    return EnergyBreakdown(
        dram_j=ledger.dram_bytes_total * cfg.dram_energy_pj_per_byte * 1e-12,
        sram_j=ledger.sram_bytes_total * cfg.sram_energy_pj_per_byte * 1e-12,
        mac_j=ledger.mac_ops * cfg.mac_energy_pj * 1e-12,
        static_j=cfg.static_power_w * seconds,
    )
