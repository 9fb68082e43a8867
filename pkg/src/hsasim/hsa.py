"""Cycle-level model of the 256-PE hybrid systolic array.

Two dataflows share the same PEs: output-stationary matrix-matrix multiply
(prefill, INT8 x INT8) and a bucket-shifted matrix-vector multiply (decode,
MXINT4 weights x INT8 activations) in which each 4-bit shift code is split
into a fine shift applied in the per-cluster shifters and a coarse bucket
selecting which of the 4 PE rows accumulates. Both integer datapaths are
bit-exact; all cycle accounting is deterministic.

Per-PE state is vectorized rather than object-per-PE: the MVM path keeps
the 32-bit accumulators as a [4 bucket rows x channels] array with the
enable mask implied by each column's coarse code, and the MMM path keeps
one output-stationary tile of 32-bit accumulators at a time. Overflow is
detected against the 32-bit range, never silently widened.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AccumulatorOverflow,
    ConfigError,
    DimensionOverflow,
    InvalidCode,
    ShapeMismatch,
)
from .quant import Int8Tensor, MxInt4Tensor

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

# Coarse bucket shift step: each PE row up the drain chain weighs 2^4 more.
BUCKET_SHIFT = 4


@dataclass(frozen=True)
class HsaConfig:
    """Array geometry, clock, and SRAM sizing."""

    pe_rows: int = 16
    pe_cols: int = 16
    clusters: int = 4
    clock_hz: float = 5.0e8
    accumulator_width_bits: int = 32
    # Activation SRAM holds a 16-row INT8 tile up to dimension 4096.
    activation_sram_bytes: int = 16 * 4096
    weight_sram_bytes_per_cluster: int = 16 * 4096
    # MMM skew fill/flush for a 16x16 output-stationary tile: 15 cycles of
    # input skew plus 15 of flush, paid once per invocation since consecutive
    # tiles overlap fill with the previous drain.
    mmm_fill_flush_cycles: int = 30
    mmm_drain_cycles: int = 16
    # MVM vertical drain: 4 shift-accumulate hops plus 1 writeback, not
    # overlapped with the next group's weight stream.
    mvm_drain_cycles: int = 5
    # Longest K a single accumulation segment may cover; beyond this the
    # caller must drain segment-wise to keep 32-bit accumulators honest.
    mvm_max_segment_k: int = 2**14

    def __post_init__(self) -> None:
        if self.pe_rows % self.clusters:
            raise ConfigError(
                f"pe_rows={self.pe_rows} not divisible by clusters={self.clusters}"
            )
        if self.clock_hz <= 0:
            raise ConfigError("clock_hz must be positive")

    @property
    def rows_per_cluster(self) -> int:
        return self.pe_rows // self.clusters

    @property
    def pe_count(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def peak_tops(self) -> float:
        """Peak throughput: every PE does one multiply and one add per cycle."""
        return self.pe_count * 2 * self.clock_hz / 1e12

    @property
    def mvm_weight_stream_bytes_per_cycle(self) -> float:
        """Decode weight demand: 16 4-bit mantissas + one 4-bit code per cluster."""
        return self.clusters * (self.pe_cols * 0.5 + 0.5)

    @property
    def mvm_weight_stream_bytes_per_s(self) -> float:
        return self.mvm_weight_stream_bytes_per_cycle * self.clock_hz


@dataclass(frozen=True)
class CycleCount:
    """Cycle breakdown for one operation or an aggregated phase."""

    compute_cycles: int = 0
    fill_cycles: int = 0
    drain_cycles: int = 0
    stall_cycles: int = 0

    @property
    def total(self) -> int:
        return (
            self.compute_cycles
            + self.fill_cycles
            + self.drain_cycles
            + self.stall_cycles
        )

    def __add__(self, other: "CycleCount") -> "CycleCount":
        return CycleCount(
            self.compute_cycles + other.compute_cycles,
            self.fill_cycles + other.fill_cycles,
            self.drain_cycles + other.drain_cycles,
            self.stall_cycles + other.stall_cycles,
        )

    def with_stalls(self, extra: int) -> "CycleCount":
        return CycleCount(
            self.compute_cycles,
            self.fill_cycles,
            self.drain_cycles,
            self.stall_cycles + int(extra),
        )


@dataclass
class MvmStats:
    """Optional instrumentation from an MVM run (clock-gating accounting)."""

    enabled_pe_cycles: int = 0
    # weight cycles routed to each bucket row, summed over all PE columns
    row_enable_counts: np.ndarray = field(
        default_factory=lambda: np.zeros(4, dtype=np.int64)
    )


def bucket_select(code: int) -> tuple[int, int]:
    """Split a shift code into (fine shift 0..3, bucket row 0..3)."""
    if not 0 <= code <= 14:
        raise InvalidCode(f"shift code {code} outside [0, 14]")
    return code & 3, code >> 2


def drain_mvm(accums: np.ndarray) -> int:
    """Vertical drain: sum of per-row accumulators, row r weighted by 2^(4r).

    Evaluated stage by stage in 32-bit signed semantics with overflow
    detection at every shift-accumulate hop.
    """
    acc = np.asarray(accums, dtype=np.int64)
    if acc.shape[0] != 4:
        raise ShapeMismatch(f"expected 4 bucket rows, got {acc.shape[0]}")
    _check_int32(acc, "bucket accumulator")
    s = acc[3]
    for r in (2, 1, 0):
        s = (s << BUCKET_SHIFT) + acc[r]
        _check_int32(s, f"drain stage above row {r}")
    return s


def _check_int32(values, what: str) -> None:
    arr = np.asarray(values)
    if arr.size and (arr.min() < INT32_MIN or arr.max() > INT32_MAX):
        raise AccumulatorOverflow(f"{what} exceeds 32-bit signed range")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def mmm_cycles(m: int, k: int, n: int, cfg: HsaConfig) -> CycleCount:
    """Cycle cost of one output-stationary MMM: K + 16 per 16x16 tile in
    steady state, plus one fill/flush skew per invocation."""
    tiles = _ceil_div(m, cfg.pe_rows) * _ceil_div(n, cfg.pe_cols)
    return CycleCount(
        compute_cycles=tiles * k,
        fill_cycles=cfg.mmm_fill_flush_cycles,
        drain_cycles=tiles * cfg.mmm_drain_cycles,
    )


def mvm_cycles(c_out: int, k: int, cfg: HsaConfig) -> CycleCount:
    """Cycle cost of one MVM: each cluster runs its 16-channel groups
    back to back at K + drain cycles per group; clusters run in parallel."""
    channels_per_pass = cfg.clusters * cfg.pe_cols
    passes = _ceil_div(c_out, channels_per_pass)
    return CycleCount(
        compute_cycles=passes * k,
        drain_cycles=passes * cfg.mvm_drain_cycles,
    )


def run_mmm(
    a: Int8Tensor,
    b: Int8Tensor,
    transpose_out: bool = False,
    cfg: HsaConfig | None = None,
) -> tuple[np.ndarray, CycleCount]:
    """Execute an INT8 [M x K] @ [K x N] product on the array.

    The integer result is exact (32-bit accumulators are checked, never
    silently widened). Output is drained vertically (transposed) when
    `transpose_out` is set, horizontally otherwise; the cycle cost is the
    same either way.
    """
    cfg = cfg or HsaConfig()
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim != 2:
        raise ShapeMismatch("run_mmm operands must be 2-D")
    m, ka = av.shape
    kb, n = bv.shape
    if ka != kb:
        raise ShapeMismatch(f"inner dimensions differ: {ka} vs {kb}")
    if m < 1 or n < 1 or ka < 1:
        raise ShapeMismatch("all dimensions must be >= 1")
    if m * ka > cfg.activation_sram_bytes:
        raise DimensionOverflow(
            f"activation operand {m}x{ka} exceeds {cfg.activation_sram_bytes} B "
            "of activation SRAM; tile before dispatch"
        )
    # Only cluster 0's weight SRAM is active in MMM; it must hold one
    # K x 16 column block of the weight operand.
    if ka * cfg.pe_cols > cfg.weight_sram_bytes_per_cluster:
        raise DimensionOverflow(
            f"weight column block {ka}x{cfg.pe_cols} exceeds "
            f"{cfg.weight_sram_bytes_per_cluster} B of weight SRAM"
        )

    out = av.astype(np.int64) @ bv.astype(np.int64)
    _check_int32(out, "MMM accumulator")
    cycles = mmm_cycles(m, ka, n, cfg)
    result = out.T if transpose_out else out
    return result.astype(np.int32), cycles


def run_mvm(
    w: MxInt4Tensor,
    x: Int8Tensor,
    cfg: HsaConfig | None = None,
    stats: MvmStats | None = None,
) -> tuple[np.ndarray, CycleCount]:
    """Execute an MXINT4 [C_out x K] matrix-vector product on the array.

    The datapath is the decomposed one: the fine two code bits shift the
    4-bit weight into 8 bits before it enters the array, the coarse two bits
    steer the product into one of the 4 bucket rows (the other rows stay
    clock-gated), and the vertical drain recombines rows with 2^(4r) weights.
    The integer output is bit-identical to sum_j m[i,j] * x[j] * 2^code[g,j].
    """
    cfg = cfg or HsaConfig()
    xv = x.values
    if xv.ndim != 1:
        raise ShapeMismatch(f"MVM activation must be a vector, got {xv.shape}")
    k = xv.shape[0]
    if k != w.cols:
        raise ShapeMismatch(f"weight cols {w.cols} != activation length {k}")
    if k > cfg.mvm_max_segment_k:
        raise AccumulatorOverflow(
            f"K={k} exceeds the {cfg.mvm_max_segment_k}-element accumulation "
            "segment; drain segment-wise for longer reductions"
        )
    if k > cfg.activation_sram_bytes:
        raise DimensionOverflow("activation vector exceeds activation SRAM")
    if w.group_size != cfg.pe_cols:
        raise ShapeMismatch(
            f"MVM dataflow drives one code per {cfg.pe_cols}-PE cluster row; "
            f"group_size must be {cfg.pe_cols}, got {w.group_size}"
        )

    channels_per_pass = cfg.clusters * cfg.pe_cols
    c_pad = _ceil_div(w.padded_rows, channels_per_pass) * channels_per_pass

    mant = np.zeros((c_pad, k), dtype=np.int64)
    mant[: w.padded_rows] = w.mantissas
    codes = np.zeros((c_pad // w.group_size, k), dtype=np.int64)
    codes[: w.num_groups] = w.shift_codes
    code_e = np.repeat(codes, w.group_size, axis=0)

    fine = code_e & 3
    row = code_e >> 2

    # Fine shift happens before the PE: the widened weight must fit 8 bits.
    w8 = mant << fine
    if w8.min(initial=0) < -128 or w8.max(initial=0) > 127:
        raise AccumulatorOverflow("fine-shifted weight left 8-bit range")

    prod = w8 * xv.astype(np.int64)[None, :]
    row_acc = np.zeros((4, c_pad), dtype=np.int64)
    for r in range(4):
        row_acc[r] = np.where(row == r, prod, 0).sum(axis=1)
    # With K capped at the segment limit, |row acc| <= K * 64 * 128 < 2^31,
    # so mid-stream overflow is impossible; the drain stages are checked.
    _check_int32(row_acc, "bucket row accumulator")
    out = drain_mvm(row_acc)

    if stats is not None:
        # only real (16-padded) channels raise enables; the 64-pad lanes of a
        # partially filled pass hold no mapped channels
        real = w.padded_rows
        stats.enabled_pe_cycles += int(k * real)
        for r in range(4):
            stats.row_enable_counts[r] += int((row[:real] == r).sum())

    cycles = mvm_cycles(c_pad, k, cfg)
    return out[: w.rows].astype(np.int32), cycles


def mvm_reference(w: MxInt4Tensor, x: Int8Tensor) -> np.ndarray:
    """Direct-formula oracle: sum_j m[i,j] * x[j] * 2^code[g,j], widened to
    64 bits (|term| <= 8*128*2^14, far from the int64 edge at any valid K)."""
    code_e = np.repeat(w.shift_codes.astype(np.int64), w.group_size, axis=0)
    terms = (
        w.mantissas.astype(np.int64)
        * x.values.astype(np.int64)[None, :]
        * np.left_shift(np.int64(1), code_e)
    )
    return terms.sum(axis=1)[: w.rows]


def utilization(cycles: CycleCount, mode: str, mac_ops: int | None = None,
                cfg: HsaConfig | None = None) -> float:
    """Fraction of cycles spent consuming operands.

    MVM: weight-consuming cycles over total (stalls and drains lower it).
    MMM: active-MAC-cycle fraction over the whole array when `mac_ops` is
    given, otherwise the compute-cycle fraction.
    """
    if cycles.total == 0:
        return 0.0
    if mode == "mvm":
        return cycles.compute_cycles / cycles.total
    if mode == "mmm":
        if mac_ops is not None:
            cfg = cfg or HsaConfig()
            return mac_ops / (cfg.pe_count * cycles.total)
        return cycles.compute_cycles / cycles.total
    raise ValueError(f"unknown utilization mode {mode!r}")
