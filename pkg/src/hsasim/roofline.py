"""Closed-form roofline model of a full scenario run.

This is a standalone derivation from the model dimensions: no layer graph is
built and no per-op scheduler runs. The scenario runner must agree with it
exactly (integer cycles and bytes, hence identical seconds); the two paths
are maintained as independent implementations so aggregation bugs in either
surface as a mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hsa import CycleCount, HsaConfig
from .memsys import MemConfig, TrafficLedger, phase_energy, phase_latency
from .workload import INT8_PRECISION, ModelConfig, PpuCycleModel, ScenarioConfig


def _ceil(a: int, b: int) -> int:
    return -(-a // b)


def _mx_payload(rows: int, cols: int) -> int:
    padded = _ceil(rows, 16) * 16
    return (padded * cols + 1) // 2 + ((padded // 16) * cols + 1) // 2


@dataclass(frozen=True)
class RooflinePhase:
    cycles: CycleCount
    ledger: TrafficLedger
    seconds: float
    energy_j: float


@dataclass(frozen=True)
class RooflineResult:
    prefill: RooflinePhase
    decode: RooflinePhase
    decode_cycles_per_token: CycleCount
    decode_dram_per_token: int
    tokens_per_s: float
    tokens_per_j: float

    @property
    def total_seconds(self) -> float:
        return self.prefill.seconds + self.decode.seconds

    @property
    def total_energy_j(self) -> float:
        return self.prefill.energy_j + self.decode.energy_j

    @property
    def decode_runtime_fraction(self) -> float:
        return self.decode.seconds / self.total_seconds


def decode_token_closed_form(
    cfg: ModelConfig,
    hsa: HsaConfig | None = None,
    ppu: PpuCycleModel | None = None,
) -> tuple[CycleCount, TrafficLedger]:
    """Per-token decode cost, straight from the dimensions."""
    hsa = hsa or HsaConfig()
    ppu = ppu or PpuCycleModel()
    d, f = cfg.hidden_dim, cfg.ffn_dim
    heads, dh = cfg.num_heads, cfg.head_dim
    lanes = hsa.clusters * hsa.pe_cols
    shapes = [(d, d)] * 5 + [(f, d), (d, f)]

    compute = drain = fill = 0
    macs = act_rd = act_wr = enabled = 0
    for c_out, k in shapes:
        passes = _ceil(c_out, lanes)
        compute += passes * k
        drain += passes * hsa.mvm_drain_cycles
        macs += c_out * k
        act_rd += k * passes
        act_wr += c_out
        enabled += k * _ceil(c_out, hsa.pe_cols) * hsa.pe_cols
    ret_macs = 3 * heads * dh * dh
    compute += _ceil(ret_macs, lanes)
    macs += ret_macs
    fill += ppu.decode_layer_cycles(cfg)

    L = cfg.num_layers
    cycles = CycleCount(
        compute_cycles=L * compute,
        fill_cycles=L * fill + ppu.elementwise(d),
        drain_cycles=L * drain,
    )

    if cfg.weight_precision == INT8_PRECISION:
        stream = sum(c * k for c, k in shapes)
    else:
        stream = sum(_mx_payload(c, k) for c, k in shapes)
    layer_w = stream + 2 * d * 4 + heads * 4

    led = TrafficLedger()
    led.add_dram("weights", L * layer_w + d * 4)
    led.add_sram_write("weight_sram", L * layer_w)
    led.add_sram_read("weight_sram", L * layer_w)
    led.add_sram_read("act_sram", L * act_rd)
    led.add_sram_write("act_sram", L * act_wr)
    state_bytes = heads * dh * dh * 4
    led.add_sram_read("state_sram", L * state_bytes)
    led.add_sram_write("state_sram", L * state_bytes)
    led.add_macs(L * macs)
    led.add_enabled_pe_cycles(L * enabled)
    return cycles, led


def prefill_closed_form(
    cfg: ModelConfig,
    n_tokens: int,
    hsa: HsaConfig | None = None,
) -> tuple[CycleCount, TrafficLedger]:
    """Prompt-phase cost for `n_tokens`, straight from the dimensions."""
    hsa = hsa or HsaConfig()
    d, f = cfg.hidden_dim, cfg.ffn_dim
    heads, dh = cfg.num_heads, cfg.head_dim
    t = n_tokens
    stripes = _ceil(t, hsa.pe_rows)
    shapes = [(t, d, d)] * 5 + [(t, d, f), (t, f, d)]  # (M, K, N) weight matmuls
    ret_shapes = [(t, dh, t), (t, t, dh)]  # per head, both operands activations

    compute_w = sum(stripes * _ceil(n, hsa.pe_cols) * k for _, k, n in shapes)
    compute_r = sum(_ceil(m, hsa.pe_rows) * _ceil(n, hsa.pe_cols) * k
                    for m, k, n in ret_shapes)
    drain_w = sum(stripes * _ceil(n, hsa.pe_cols) for _, _, n in shapes)
    drain_r = sum(_ceil(m, hsa.pe_rows) * _ceil(n, hsa.pe_cols) for m, _, n in ret_shapes)
    weight_stream = sum(stripes * k * n for _, k, n in shapes)
    act_bytes_w = sum(m * k + m * n for m, k, n in shapes)
    act_bytes_r = sum(m * k + k * n + m * n for m, k, n in ret_shapes)

    L = cfg.num_layers
    cycles = CycleCount(
        compute_cycles=L * (compute_w + heads * compute_r),
        fill_cycles=L * (7 + 2 * heads) * hsa.mmm_fill_flush_cycles,
        drain_cycles=L * (drain_w + heads * drain_r) * hsa.mmm_drain_cycles,
    )

    led = TrafficLedger()
    led.add_macs(L * (sum(m * k * n for m, k, n in shapes)
                      + heads * sum(m * k * n for m, k, n in ret_shapes)))
    led.add_dram(
        "weights",
        L * (weight_stream + stripes * (2 * d * 4 + heads * 4)) + stripes * d * 4,
    )
    led.add_dram("activations", L * (act_bytes_w + heads * act_bytes_r))
    led.add_sram_write("weight_sram", L * weight_stream)
    led.add_sram_read("weight_sram", L * compute_w * hsa.pe_cols)
    led.add_sram_read(
        "act_sram",
        L * (compute_w * hsa.pe_rows
             + heads * compute_r * (hsa.pe_rows + hsa.pe_cols)),
    )
    led.add_sram_write("act_sram", L * (act_bytes_w + heads * act_bytes_r))
    return cycles, led


def roofline_scenario(
    cfg: ModelConfig,
    scenario: ScenarioConfig,
    mem: MemConfig | None = None,
    hsa: HsaConfig | None = None,
    ppu: PpuCycleModel | None = None,
) -> RooflineResult:
    """End-to-end closed-form scenario evaluation on the hybrid array."""
    mem = mem or MemConfig()
    hsa = hsa or HsaConfig()

    pf_cycles, pf_led = prefill_closed_form(cfg, scenario.prompt_tokens, hsa)
    pf_t = phase_latency(pf_cycles.total, pf_led.dram_bytes_total, mem, hsa.clock_hz)
    pf_cycles = pf_cycles.with_stalls(pf_t.stall_cycles)
    pf_energy = phase_energy(pf_led, pf_t.seconds, mem)

    tok_cycles, tok_led = decode_token_closed_form(cfg, hsa, ppu)
    n = scenario.output_tokens
    dec_cycles = CycleCount(
        compute_cycles=tok_cycles.compute_cycles * n,
        fill_cycles=tok_cycles.fill_cycles * n,
        drain_cycles=tok_cycles.drain_cycles * n,
    )
    dec_led = TrafficLedger()
    dec_led.add_dram("weights", tok_led.dram_bytes_weights * n)
    dec_led.add_dram("activations", tok_led.dram_bytes_activations * n)
    dec_led.add_dram("state", tok_led.dram_bytes_state * n)
    for k, v in tok_led.sram_reads.items():
        dec_led.add_sram_read(k, v * n)
    for k, v in tok_led.sram_writes.items():
        dec_led.add_sram_write(k, v * n)
    dec_led.add_macs(tok_led.mac_ops * n)
    dec_led.add_enabled_pe_cycles(tok_led.enabled_pe_cycles * n)
    dec_t = phase_latency(dec_cycles.total, dec_led.dram_bytes_total, mem, hsa.clock_hz)
    dec_cycles = dec_cycles.with_stalls(dec_t.stall_cycles)
    dec_energy = phase_energy(dec_led, dec_t.seconds, mem)

    total_s = pf_t.seconds + dec_t.seconds
    total_j = pf_energy.total_j + dec_energy.total_j
    return RooflineResult(
        prefill=RooflinePhase(pf_cycles, pf_led, pf_t.seconds, pf_energy.total_j),
        decode=RooflinePhase(dec_cycles, dec_led, dec_t.seconds, dec_energy.total_j),
        decode_cycles_per_token=tok_cycles,
        decode_dram_per_token=tok_led.dram_bytes_total,
        tokens_per_s=scenario.total_tokens / total_s,
        tokens_per_j=scenario.total_tokens / total_j,
    )
