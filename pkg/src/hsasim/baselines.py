"""Analytic models of the comparison architectures.

Three MAC organizations are compared under identical PE count, clock, and
tiling: the hybrid array itself, a conventional 2-D systolic array (no
low-bit decode path, one PE column active during batch-1 matvec), and a
vector unit (flexible, but no weight reuse during prefill, so every MAC
pays a weight SRAM read).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError
from .hsa import CycleCount, HsaConfig
from .memsys import MemConfig, TrafficLedger, phase_energy, phase_latency
from .roofline import decode_token_closed_form, roofline_scenario
from .workload import INT8_PRECISION, ModelConfig, PpuCycleModel, ScenarioConfig

HSA = "hsa"
CONV_SA = "conv-sa"
VECTOR_UNIT = "vector"
BASELINE_KINDS = (HSA, CONV_SA, VECTOR_UNIT)

# Conventional SA in batch-1 matvec: weights are stationary, one column of
# PEs sees useful work per cycle.
CONV_SA_DECODE_ACTIVE_FRACTION = 1.0 / 16.0

# Vector-unit weight SRAM energy per fetched byte. The published comparison
# reports the end-to-end effect (about a third more prefill energy), not the
# constant itself; this value is calibrated to land the default-config ratio
# in that neighborhood and is emitted in compare reports.
VU_WEIGHT_SRAM_PJ_PER_BYTE = 1.3


@dataclass(frozen=True)
class BaselineResult:
    arch: str
    scenario: str
    tokens_per_s: float
    tokens_per_j: float
    prefill_seconds: float
    decode_seconds: float
    prefill_energy_j: float
    decode_energy_j: float
    notes: dict
    prefill_cycles: CycleCount | None = None
    decode_cycles: CycleCount | None = None
    prefill_ledger: TrafficLedger | None = None
    decode_ledger: TrafficLedger | None = None

    @property
    def total_seconds(self) -> float:
        return self.prefill_seconds + self.decode_seconds

    @property
    def total_energy_j(self) -> float:
        return self.prefill_energy_j + self.decode_energy_j


def _scaled_ledger(tok: TrafficLedger, n: int) -> TrafficLedger:
    led = TrafficLedger()
    led.add_dram("weights", tok.dram_bytes_weights * n)
    led.add_dram("activations", tok.dram_bytes_activations * n)
    led.add_dram("state", tok.dram_bytes_state * n)
    for k, v in tok.sram_reads.items():
        led.add_sram_read(k, v * n)
    for k, v in tok.sram_writes.items():
        led.add_sram_write(k, v * n)
    led.add_macs(tok.mac_ops * n)
    led.add_enabled_pe_cycles(tok.enabled_pe_cycles * n)
    return led


def model_scenario(
    kind: str,
    model: ModelConfig,
    scenario: ScenarioConfig,
    mem: MemConfig | None = None,
    hsa: HsaConfig | None = None,
    ppu: PpuCycleModel | None = None,
) -> BaselineResult:
    """Closed-form end-to-end evaluation of one architecture.

    All three share the hybrid array's prefill (compute-bound MMM at equal
    PE count and clock makes the latency identical); they differ in the
    decode dataflow and in prefill SRAM energy.
    """
    mem = mem or MemConfig()
    hsa = hsa or HsaConfig()
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"unknown architecture {kind!r}; expected {BASELINE_KINDS}")

    ref = roofline_scenario(model, scenario, mem, hsa, ppu)
    notes: dict = {}

    if kind == HSA:
        return BaselineResult(
            arch=kind,
            scenario=scenario.name,
            tokens_per_s=ref.tokens_per_s,
            tokens_per_j=ref.tokens_per_j,
            prefill_seconds=ref.prefill.seconds,
            decode_seconds=ref.decode.seconds,
            prefill_energy_j=ref.prefill.energy_j,
            decode_energy_j=ref.decode.energy_j,
            notes=notes,
            prefill_cycles=ref.prefill.cycles,
            decode_cycles=ref.decode.cycles,
            prefill_ledger=ref.prefill.ledger,
            decode_ledger=ref.decode.ledger,
        )

    if kind == VECTOR_UNIT:
        # Latency and decode energy match the hybrid array; prefill swaps the
        # systolic weight-reuse reads for one weight SRAM fetch per MAC.
        pf_led = ref.prefill.ledger
        hsa_wsram_read_j = (
            pf_led.sram_reads.get("weight_sram", 0)
            * mem.sram_energy_pj_per_byte
            * 1e-12
        )
        vu_read_j = pf_led.mac_ops * VU_WEIGHT_SRAM_PJ_PER_BYTE * 1e-12
        prefill_j = ref.prefill.energy_j - hsa_wsram_read_j + vu_read_j
        total_j = prefill_j + ref.decode.energy_j
        notes["vu_weight_sram_pj_per_byte"] = VU_WEIGHT_SRAM_PJ_PER_BYTE
        return BaselineResult(
            arch=kind,
            scenario=scenario.name,
            tokens_per_s=ref.tokens_per_s,
            tokens_per_j=scenario.total_tokens / total_j,
            prefill_seconds=ref.prefill.seconds,
            decode_seconds=ref.decode.seconds,
            prefill_energy_j=prefill_j,
            decode_energy_j=ref.decode.energy_j,
            notes=notes,
            prefill_cycles=ref.prefill.cycles,
            decode_cycles=ref.decode.cycles,
            prefill_ledger=ref.prefill.ledger,
            decode_ledger=ref.decode.ledger,
        )

    # Conventional SA: no 4-bit decode path (INT8 weights from DRAM) and no
    # matvec bucket dataflow, so one PE column of the array does useful work
    # per cycle.
    int8_model = replace(model, weight_precision=INT8_PRECISION)
    tok_cycles, tok_led = decode_token_closed_form(int8_model, hsa, ppu)
    active = hsa.pe_count * CONV_SA_DECODE_ACTIVE_FRACTION
    conv_compute = -(-tok_led.mac_ops // int(active))
    conv_tok_cycles = CycleCount(
        compute_cycles=conv_compute,
        fill_cycles=tok_cycles.fill_cycles,
        drain_cycles=0,
    )
    n = scenario.output_tokens
    dec_led = _scaled_ledger(tok_led, n)
    dec_total = CycleCount(
        compute_cycles=conv_tok_cycles.compute_cycles * n,
        fill_cycles=conv_tok_cycles.fill_cycles * n,
        drain_cycles=0,
    )
    dec_t = phase_latency(dec_total.total, dec_led.dram_bytes_total, mem, hsa.clock_hz)
    dec_energy = phase_energy(dec_led, dec_t.seconds, mem)
    total_s = ref.prefill.seconds + dec_t.seconds
    total_j = ref.prefill.energy_j + dec_energy.total_j
    notes["conv_sa_decode_active_fraction"] = CONV_SA_DECODE_ACTIVE_FRACTION
    return BaselineResult(
        arch=kind,
        scenario=scenario.name,
        tokens_per_s=scenario.total_tokens / total_s,
        tokens_per_j=scenario.total_tokens / total_j,
        prefill_seconds=ref.prefill.seconds,
        decode_seconds=dec_t.seconds,
        prefill_energy_j=ref.prefill.energy_j,
        decode_energy_j=dec_energy.total_j,
        notes=notes,
        prefill_cycles=ref.prefill.cycles,
        decode_cycles=dec_total.with_stalls(dec_t.stall_cycles),
        prefill_ledger=ref.prefill.ledger,
        decode_ledger=dec_led,
    )
