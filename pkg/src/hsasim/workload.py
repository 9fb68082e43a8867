"""RetNet-style layer graphs, prefill/decode scheduling, and reference paths.

A model is a stack of identical blocks: fused-norm q/k/v/gate projections,
per-head RoPE on q and k, a decaying retention state, a gated output
projection, then a fused-norm FFN. Prefill runs matrix-matrix workloads in
INT8; decode runs matrix-vector workloads with MXINT4 weights. The module
provides both a functional integer pipeline (toy scale, bit-exact array
semantics) and an analytic cost path (same cycle/traffic formulas, no tensor
data) so billion-parameter presets simulate in milliseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SramOverflow
from .hsa import CycleCount, HsaConfig, mmm_cycles, mvm_cycles, run_mmm, run_mvm
from .memsys import TrafficLedger
from .ppu import (
    SILU,
    AngleMemory,
    activation,
    init_angle_memory,
    rope_angles_direct,
    rope_embed,
    rope_embed_at,
    rope_update,
    sigma_inverse,
)
from .quant import (
    Int8Tensor,
    MxInt4Tensor,
    quantize_activation_int8,
    quantize_mxint4,
)

INT8_PRECISION = "INT8"
MXINT4_PRECISION = "MXINT4"
WEIGHT_PRECISIONS = (INT8_PRECISION, MXINT4_PRECISION)

# Weight matrices of one block, in dispatch order: (name, out_dim, in_dim)
# expressed in units of (hidden_dim d, ffn_dim f).
PROJECTION_NAMES = ("q_proj", "k_proj", "v_proj", "g_proj", "o_proj")

# Materialize synthetic weights only below this parameter count.
MATERIALIZE_LIMIT = 20_000_000


@dataclass(frozen=True)
class ModelConfig:
    """Model dimensions; presets are user-overridable."""

    num_layers: int
    hidden_dim: int
    ffn_dim: int
    num_heads: int
    head_dim: int
    vocab_size: int = 50257  # report-only; embeddings are out of scope
    weight_precision: str = MXINT4_PRECISION
    rope_base: float = 10000.0
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.hidden_dim != self.num_heads * self.head_dim:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} != num_heads {self.num_heads} "
                f"x head_dim {self.head_dim}"
            )
        if self.head_dim % 2:
            raise ConfigError("head_dim must be even for pairwise rotation")
        if self.weight_precision not in WEIGHT_PRECISIONS:
            raise ConfigError(f"weight_precision must be one of {WEIGHT_PRECISIONS}")
        if max(self.hidden_dim, self.ffn_dim) > 4096:
            raise ConfigError(
                "hidden_dim/ffn_dim above 4096 exceed the activation SRAM "
                "design point (16 rows x 4096)"
            )
        if min(self.num_layers, self.hidden_dim, self.ffn_dim, self.num_heads) < 1:
            raise ConfigError("all dimensions must be >= 1")

    def weight_shapes(self) -> list[tuple[str, int, int]]:
        d, f = self.hidden_dim, self.ffn_dim
        return [(n, d, d) for n in PROJECTION_NAMES] + [
            ("ffn_up", f, d),
            ("ffn_down", d, f),
        ]

    @property
    def param_count(self) -> int:
        """L * (5d^2 + 2df + 2d norm gammas) + final norm gamma d."""
        d, f = self.hidden_dim, self.ffn_dim
        per_layer = 5 * d * d + 2 * d * f + 2 * d
        return self.num_layers * per_layer + d

    @property
    def matrix_param_count(self) -> int:
        return self.num_layers * sum(o * i for _, o, i in self.weight_shapes())


MODEL_PRESETS = {
    # Depth/width in the style of compact retention-based LLMs; lands the
    # parameter count at ~1.29e9 with every dimension inside the 4096 SRAM
    # design point.
    "retnet-1.3b-like": ModelConfig(
        num_layers=24,
        hidden_dim=2560,
        ffn_dim=4096,
        num_heads=20,
        head_dim=128,
        name="retnet-1.3b-like",
    ),
    "toy": ModelConfig(
        num_layers=2,
        hidden_dim=64,
        ffn_dim=128,
        num_heads=2,
        head_dim=32,
        vocab_size=256,
        name="toy",
    ),
}


@dataclass(frozen=True)
class ScenarioConfig:
    prompt_tokens: int
    output_tokens: int
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.prompt_tokens < 1 or self.output_tokens < 1:
            raise ConfigError("token counts must be >= 1")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.output_tokens


SCENARIO_PRESETS = {
    "liso": ScenarioConfig(750, 50, name="liso"),
    "silo": ScenarioConfig(50, 750, name="silo"),
}


@dataclass(frozen=True)
class PpuCycleModel:
    """Serialized PPU work per decode token (prefill PPU work pipelines
    under the compute-bound MMM stream and is not charged)."""

    lanes: int = 16

    def elementwise(self, n: int) -> int:
        return -(-n // self.lanes)

    def rope_embed_cycles(self, cfg: ModelConfig) -> int:
        return self.elementwise(cfg.num_heads * cfg.head_dim)

    def rope_update_cycles(self, cfg: ModelConfig) -> int:
        # one pass over the d/2-entry angle memory, serialized after Embed
        return self.elementwise(cfg.head_dim // 2)

    def decode_layer_cycles(self, cfg: ModelConfig) -> int:
        gate = self.elementwise(2 * cfg.hidden_dim)  # swish + multiply
        ffn_act = self.elementwise(cfg.ffn_dim)
        return 2 * self.rope_embed_cycles(cfg) + self.rope_update_cycles(cfg) + gate + ffn_act


def retention_decay(num_heads: int) -> np.ndarray:
    """Per-head decay 1 - 2^-(5 + h), slowest for the last head."""
    h = np.arange(num_heads, dtype=np.float64)
    return (1.0 - 2.0 ** (-5.0 - h)).astype(np.float32)


def retention_decode_macs(cfg: ModelConfig) -> int:
    """Per-layer decode retention work: decay-scale + rank-1 update + readout."""
    return 3 * cfg.num_heads * cfg.head_dim * cfg.head_dim


# ── Graph construction ───────────────────────────────────────────────────


@dataclass
class LayerGraph:
    """Model structure plus (optionally materialized) synthetic weights."""

    cfg: ModelConfig
    seed: int
    weights: dict | None  # (layer, name) -> float32 matrix
    gammas: dict  # (layer, site) -> float32 vector; sites: attn, ffn; plus final
    decay: np.ndarray
    epsilon: float = 1e-6
    _mx_cache: dict = field(default_factory=dict, repr=False)
    _int8_cache: dict = field(default_factory=dict, repr=False)

    @property
    def materialized(self) -> bool:
        return self.weights is not None

    def weight(self, layer: int, name: str) -> np.ndarray:
        if self.weights is None:
            raise ConfigError("graph built without materialized weights")
        return self.weights[(layer, name)]

    def decode_weight(self, layer: int, name: str) -> MxInt4Tensor:
        key = (layer, name)
        if key not in self._mx_cache:
            self._mx_cache[key] = quantize_mxint4(self.weight(layer, name))
        return self._mx_cache[key]

    def prefill_weight(self, layer: int, name: str) -> Int8Tensor:
        key = (layer, name)
        if key not in self._int8_cache:
            w = self.weight(layer, name)
            scale = float(np.abs(w).max() / 127.0) or 1.0
            self._int8_cache[key] = quantize_activation_int8(w, scale)
        return self._int8_cache[key]


def build_model(cfg: ModelConfig, seed: int, materialize: bool | None = None) -> LayerGraph:
    """Deterministic synthetic model: seeded Gaussians scaled by fan-in."""
    if materialize is None:
        materialize = cfg.param_count <= MATERIALIZE_LIMIT
    rng = np.random.default_rng([seed, 0xC0FFEE])
    weights = None
    if materialize:
        weights = {}
        for layer in range(cfg.num_layers):
            for name, out_dim, in_dim in cfg.weight_shapes():
                std = 1.0 / math.sqrt(in_dim)
                weights[(layer, name)] = rng.normal(
                    0.0, std, size=(out_dim, in_dim)
                ).astype(np.float32)
    gammas = {}
    for layer in range(cfg.num_layers):
        for site in ("attn", "ffn"):
            gammas[(layer, site)] = np.ones(cfg.hidden_dim, dtype=np.float32)
    gammas["final"] = np.ones(cfg.hidden_dim, dtype=np.float32)
    return LayerGraph(
        cfg=cfg,
        seed=seed,
        weights=weights,
        gammas=gammas,
        decay=retention_decay(cfg.num_heads),
    )


def input_vectors(seed: int, token_ids, hidden_dim: int) -> np.ndarray:
    """Stand-in embeddings: one deterministic Gaussian vector per token id."""
    ids = np.asarray(token_ids, dtype=np.int64)
    out = np.empty((ids.shape[0], hidden_dim), dtype=np.float32)
    for t, tok in enumerate(ids):
        rng = np.random.default_rng([seed, 0x7E4, int(tok), t])
        out[t] = rng.normal(0.0, 1.0, size=hidden_dim).astype(np.float32)
    return out


# ── Tiling ───────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class MmmTile:
    m0: int
    m1: int
    n0: int
    n1: int
    k0: int
    k1: int


def tile_mmm(m: int, k: int, n: int, cfg: HsaConfig | None = None) -> list[MmmTile]:
    """Output-tile-major schedule: 16-row activation stripes resident, weights
    streamed per output tile, K split into SRAM-sized segments (accumulated
    in place, drained once per tile)."""
    cfg = cfg or HsaConfig()
    rows = cfg.pe_rows
    cols = cfg.pe_cols
    k_seg = min(cfg.activation_sram_bytes // rows, cfg.weight_sram_bytes_per_cluster // cols)
    if k_seg < 1:
        raise SramOverflow("SRAM too small to hold even a one-column tile")
    tiles = []
    for m0 in range(0, m, rows):
        for n0 in range(0, n, cols):
            for k0 in range(0, k, k_seg):
                tiles.append(
                    MmmTile(m0, min(m0 + rows, m), n0, min(n0 + cols, n),
                            k0, min(k0 + k_seg, k))
                )
    return tiles


@dataclass(frozen=True)
class MvmGroup:
    cluster: int
    channel0: int
    channel1: int
    k0: int
    k1: int


def tile_mvm(c_out: int, k: int, cfg: HsaConfig | None = None) -> list[MvmGroup]:
    """Round-robin 16-channel groups over the 4 clusters, K segmented at the
    accumulator guard."""
    cfg = cfg or HsaConfig()
    group = cfg.pe_cols
    k_seg = cfg.mvm_max_segment_k
    out = []
    for gi, c0 in enumerate(range(0, c_out, group)):
        for k0 in range(0, k, k_seg):
            out.append(
                MvmGroup(gi % cfg.clusters, c0, min(c0 + group, c_out),
                         k0, min(k0 + k_seg, k))
            )
    return out


def mmm_schedule_traffic(m: int, k: int, n: int, cfg: HsaConfig | None = None) -> dict:
    """Analytic DRAM byte minimum for the tile_mmm loop order.

    Activations: the 16-row stripe stays resident across the n loop, so each
    real activation byte enters once (per k segment when K must be split).
    Weights: streamed once per output tile, i.e. once per m-stripe.
    """
    cfg = cfg or HsaConfig()
    rows, cols = cfg.pe_rows, cfg.pe_cols
    k_seg = min(cfg.activation_sram_bytes // rows, cfg.weight_sram_bytes_per_cluster // cols)
    k_segs = -(-k // k_seg)
    m_stripes = -(-m // rows)
    n_tiles = -(-n // cols)
    act_in = m * k if k_segs == 1 else m * k * n_tiles
    return {
        "act_in": act_in,
        "weights": m_stripes * k * n,
        "act_out": m * n,
    }


def traffic_from_tiles(tiles: list[MmmTile], k: int, cfg: HsaConfig | None = None) -> dict:
    """Exact DRAM bytes of a tile schedule under the residency rules above."""
    cfg = cfg or HsaConfig()
    k_seg = min(cfg.activation_sram_bytes // cfg.pe_rows,
                cfg.weight_sram_bytes_per_cluster // cfg.pe_cols)
    multi_seg = k > k_seg
    act = weights = out = 0
    seen_out = set()
    for t in tiles:
        weights += (t.k1 - t.k0) * (t.n1 - t.n0)
        if multi_seg or t.n0 == 0:
            act += (t.m1 - t.m0) * (t.k1 - t.k0)
        if (t.m0, t.n0) not in seen_out:
            seen_out.add((t.m0, t.n0))
            out += (t.m1 - t.m0) * (t.n1 - t.n0)
    return {"act_in": act, "weights": weights, "act_out": out}


# ── Analytic cost model ──────────────────────────────────────────────────


def _mx_stream_bytes(rows: int, cols: int, group_size: int = 16) -> int:
    """Payload bytes streamed from DRAM for one MXINT4 matrix (no header)."""
    padded = -(-rows // group_size) * group_size
    return (padded * cols + 1) // 2 + ((padded // group_size) * cols + 1) // 2


def _weight_stream_bytes(rows: int, cols: int, precision: str) -> int:
    if precision == MXINT4_PRECISION:
        return _mx_stream_bytes(rows, cols)
    return rows * cols  # INT8: one byte per weight


def decode_layer_weight_dram(cfg: ModelConfig) -> int:
    """Per-layer, per-token weight-stream bytes: every weight read once,
    plus the float32 norm gammas and per-head decay constants."""
    total = sum(
        _weight_stream_bytes(o, i, cfg.weight_precision)
        for _, o, i in cfg.weight_shapes()
    )
    total += 2 * cfg.hidden_dim * 4  # two norm gamma vectors
    total += cfg.num_heads * 4  # decay constants
    return total


def model_decode_footprint_bytes(cfg: ModelConfig) -> int:
    """Exact decode weight traffic per token over the whole model."""
    return cfg.num_layers * decode_layer_weight_dram(cfg) + cfg.hidden_dim * 4


def decode_token_cost(
    cfg: ModelConfig,
    hsa: HsaConfig | None = None,
    ppu: PpuCycleModel | None = None,
) -> tuple[CycleCount, TrafficLedger]:
    """Cycles and traffic for one decode step (uniform across tokens: the
    retention state is O(1), so every step costs the same)."""
    hsa = hsa or HsaConfig()
    ppu = ppu or PpuCycleModel()
    cycles = CycleCount()
    led = TrafficLedger()
    d = cfg.hidden_dim

    for layer in range(cfg.num_layers):
        for name, out_dim, in_dim in cfg.weight_shapes():
            cycles = cycles + mvm_cycles(out_dim, in_dim, hsa)
            passes = -(-out_dim // (hsa.clusters * hsa.pe_cols))
            led.add_macs(out_dim * in_dim)
            led.add_sram_read("act_sram", in_dim * passes)
            led.add_sram_write("act_sram", out_dim)
            led.add_enabled_pe_cycles(in_dim * -(-out_dim // hsa.pe_cols) * hsa.pe_cols)
        ret_macs = retention_decode_macs(cfg)
        ret_cycles = -(-ret_macs // (hsa.clusters * hsa.pe_cols))
        cycles = cycles + CycleCount(compute_cycles=ret_cycles)
        led.add_macs(ret_macs)
        state_bytes = cfg.num_heads * cfg.head_dim * cfg.head_dim * 4
        led.add_sram_read("state_sram", state_bytes)
        led.add_sram_write("state_sram", state_bytes)

        cycles = cycles + CycleCount(fill_cycles=ppu.decode_layer_cycles(cfg))

        wbytes = decode_layer_weight_dram(cfg)
        led.add_dram("weights", wbytes)
        led.add_sram_write("weight_sram", wbytes)
        led.add_sram_read("weight_sram", wbytes)

    cycles = cycles + CycleCount(fill_cycles=ppu.elementwise(d))  # final norm
    led.add_dram("weights", d * 4)  # final gamma
    return cycles, led


def prefill_cost(
    cfg: ModelConfig,
    n_tokens: int,
    hsa: HsaConfig | None = None,
) -> tuple[CycleCount, TrafficLedger]:
    """Cycles and traffic for prefilling `n_tokens` in INT8 MMM dataflow.

    Weights restream once per 16-row activation stripe (activations stay
    resident per stripe); retention runs in its chunk-parallel form as two
    per-head MMMs whose operands live in activation SRAM. PPU work pipelines
    under the compute-bound MMM stream and is not charged separately.
    """
    hsa = hsa or HsaConfig()
    cycles = CycleCount()
    led = TrafficLedger()
    t = n_tokens
    stripes = -(-t // hsa.pe_rows)
    dh = cfg.head_dim

    for layer in range(cfg.num_layers):
        for name, out_dim, in_dim in cfg.weight_shapes():
            cyc = mmm_cycles(t, in_dim, out_dim, hsa)
            cycles = cycles + cyc
            led.add_macs(t * in_dim * out_dim)
            led.add_dram("weights", stripes * in_dim * out_dim)  # INT8 restream
            led.add_dram("activations", t * in_dim + t * out_dim)
            led.add_sram_write("weight_sram", stripes * in_dim * out_dim)
            led.add_sram_read("weight_sram", cyc.compute_cycles * hsa.pe_cols)
            led.add_sram_read("act_sram", cyc.compute_cycles * hsa.pe_rows)
            led.add_sram_write("act_sram", t * in_dim + t * out_dim)
        # retention, chunk-parallel: per head QK^T [t x dh][dh x t] then
        # (A . D) V [t x t][t x dh]; both operands are activations
        for _ in range(cfg.num_heads):
            for (m_, k_, n_) in ((t, dh, t), (t, t, dh)):
                cyc = mmm_cycles(m_, k_, n_, hsa)
                cycles = cycles + cyc
                led.add_macs(m_ * k_ * n_)
                led.add_dram("activations", m_ * k_ + k_ * n_ + m_ * n_)
                led.add_sram_read("act_sram", cyc.compute_cycles * (hsa.pe_rows + hsa.pe_cols))
                led.add_sram_write("act_sram", m_ * k_ + k_ * n_ + m_ * n_)
        led.add_dram("weights", stripes * (2 * cfg.hidden_dim * 4 + cfg.num_heads * 4))
    led.add_dram("weights", stripes * cfg.hidden_dim * 4)  # final gamma per stripe
    return cycles, led


# ── Functional integer pipeline (toy scale) ──────────────────────────────


@dataclass
class DecodeState:
    """Mutable per-sequence state: O(1) in sequence length."""

    retention: np.ndarray  # [layers, heads, head_dim, head_dim] float32
    rope_mem: AngleMemory  # heads share one angle memory (same frequencies)
    token_index: int = 0

    @property
    def state_bytes(self) -> int:
        return self.retention.nbytes


def init_decode_state(cfg: ModelConfig) -> DecodeState:
    return DecodeState(
        retention=np.zeros(
            (cfg.num_layers, cfg.num_heads, cfg.head_dim, cfg.head_dim),
            dtype=np.float32,
        ),
        rope_mem=init_angle_memory(cfg.head_dim, cfg.rope_base),
    )


def _dyn_int8(x: np.ndarray) -> Int8Tensor:
    m = float(np.abs(x).max())
    return quantize_activation_int8(x, m / 127.0 if m > 0 else 1.0)


@dataclass
class StepResult:
    output: np.ndarray
    cycles: CycleCount
    ledger: TrafficLedger
    state: DecodeState


def _fused_mvm(graph: LayerGraph, layer: int, name: str, y_star: np.ndarray,
               sigma_inv: float, cycles: CycleCount, led: TrafficLedger,
               hsa: HsaConfig) -> tuple[np.ndarray, CycleCount]:
    """Quantize the gamma-scaled stream, run the MXINT4 matvec, apply the
    fused late scale sigma_inv on dequantization."""
    x8 = _dyn_int8(y_star)
    w = graph.decode_weight(layer, name)
    acc, cyc = run_mvm(w, x8, hsa)
    cycles = cycles + cyc
    passes = -(-w.rows // (hsa.clusters * hsa.pe_cols))
    led.add_macs(w.rows * w.cols)
    led.add_sram_read("act_sram", w.cols * passes)
    led.add_sram_write("act_sram", w.rows)
    led.add_enabled_pe_cycles(w.cols * -(-w.rows // hsa.pe_cols) * hsa.pe_cols)
    out = acc.astype(np.float32) * np.float32(w.tensor_scale * x8.scale * sigma_inv)
    return out, cycles


def run_decode_step(
    graph: LayerGraph,
    state: DecodeState,
    x: np.ndarray,
    hsa: HsaConfig | None = None,
    ppu: PpuCycleModel | None = None,
) -> StepResult:
    """One decode token through the quantized integer pipeline.

    Every weight-bearing matvec runs on the MVM datapath with MXINT4
    weights; RoPE Update advances the angle memory once; norms stream
    through the fused path (gamma in-layer, sigma as a late scale).
    """
    hsa = hsa or HsaConfig()
    ppu = ppu or PpuCycleModel()
    cfg = graph.cfg
    if cfg.weight_precision != MXINT4_PRECISION:
        raise ConfigError("the functional decode path models MXINT4 weights")
    cycles = CycleCount()
    led = TrafficLedger()
    resid = np.asarray(x, dtype=np.float32).copy()
    heads, dh = cfg.num_heads, cfg.head_dim

    mem = state.rope_mem
    for layer in range(cfg.num_layers):
        # attention-side fused norm: gamma applied in-layer, sigma late
        sig = sigma_inverse(resid, graph.epsilon)
        y_star = resid * graph.gammas[(layer, "attn")]
        q, cycles = _fused_mvm(graph, layer, "q_proj", y_star, sig, cycles, led, hsa)
        k, cycles = _fused_mvm(graph, layer, "k_proj", y_star, sig, cycles, led, hsa)
        v, cycles = _fused_mvm(graph, layer, "v_proj", y_star, sig, cycles, led, hsa)
        g, cycles = _fused_mvm(graph, layer, "g_proj", y_star, sig, cycles, led, hsa)

        qh = rope_embed(q.reshape(heads, dh), mem)
        kh = rope_embed(k.reshape(heads, dh), mem)
        vh = v.reshape(heads, dh)

        s = state.retention[layer]
        s *= graph.decay[:, None, None]
        s += kh[:, :, None] * vh[:, None, :]
        ret = np.einsum("hd,hde->he", qh, s).astype(np.float32)
        ret_macs = retention_decode_macs(cfg)
        cycles = cycles + CycleCount(
            compute_cycles=-(-ret_macs // (hsa.clusters * hsa.pe_cols))
        )
        led.add_macs(ret_macs)
        state_bytes = heads * dh * dh * 4
        led.add_sram_read("state_sram", state_bytes)
        led.add_sram_write("state_sram", state_bytes)

        gated = activation(g, SILU) * ret.reshape(-1)
        o, cycles = _fused_mvm(graph, layer, "o_proj", gated, 1.0, cycles, led, hsa)
        resid = resid + o

        # FFN-side fused norm
        sig = sigma_inverse(resid, graph.epsilon)
        y_star = resid * graph.gammas[(layer, "ffn")]
        up, cycles = _fused_mvm(graph, layer, "ffn_up", y_star, sig, cycles, led, hsa)
        down, cycles = _fused_mvm(graph, layer, "ffn_down", activation(up, SILU),
                                  1.0, cycles, led, hsa)
        resid = resid + down

        cycles = cycles + CycleCount(fill_cycles=ppu.decode_layer_cycles(cfg))
        wbytes = decode_layer_weight_dram(cfg)
        led.add_dram("weights", wbytes)
        led.add_sram_write("weight_sram", wbytes)
        led.add_sram_read("weight_sram", wbytes)

    rope_update(mem)  # Update mode: prepare angles for the next token
    out = resid * np.float32(sigma_inverse(resid, graph.epsilon)) * graph.gammas["final"]
    cycles = cycles + CycleCount(fill_cycles=ppu.elementwise(cfg.hidden_dim))
    led.add_dram("weights", cfg.hidden_dim * 4)
    state.token_index += 1
    return StepResult(output=out, cycles=cycles, ledger=led, state=state)


@dataclass
class PrefillResult:
    outputs: np.ndarray  # [T, d] float32
    state: DecodeState
    cycles: CycleCount
    ledger: TrafficLedger
    dispatch_log: list


def _prefill_mmm(graph, layer, name, x8, cycles, led, log, hsa, transpose=False):
    w8 = graph.prefill_weight(layer, name)
    acc, cyc = run_mmm(x8, Int8Tensor(values=w8.values.T.copy(), scale=w8.scale),
                       transpose_out=transpose, cfg=hsa)
    log.append((layer, name, x8.values.shape, transpose))
    t, in_dim = x8.values.shape
    out_dim = w8.values.shape[0]
    stripes = -(-t // hsa.pe_rows)
    led.add_macs(t * in_dim * out_dim)
    led.add_dram("weights", stripes * in_dim * out_dim)
    led.add_dram("activations", t * in_dim + t * out_dim)
    led.add_sram_write("weight_sram", stripes * in_dim * out_dim)
    led.add_sram_read("weight_sram", cyc.compute_cycles * hsa.pe_cols)
    led.add_sram_read("act_sram", cyc.compute_cycles * hsa.pe_rows)
    led.add_sram_write("act_sram", t * in_dim + t * out_dim)
    out = acc.astype(np.float32) * np.float32(w8.scale * x8.scale)
    return out, cycles + cyc


def run_prefill(
    graph: LayerGraph,
    n_tokens: int,
    token_ids=None,
    hsa: HsaConfig | None = None,
) -> PrefillResult:
    """Process the prompt through the INT8 MMM pipeline (functional, toy
    scale) and hand back the retention state for decoding.

    Retention uses the chunk-parallel form: per head, Q K^T is masked by the
    decay matrix and applied to V; the K projection is drained transposed
    since the consumer wants K^T-shaped operands.
    """
    hsa = hsa or HsaConfig()
    cfg = graph.cfg
    if token_ids is None:
        token_ids = np.arange(n_tokens)
    xs = input_vectors(graph.seed, token_ids, cfg.hidden_dim)
    t = xs.shape[0]
    heads, dh = cfg.num_heads, cfg.head_dim
    cycles = CycleCount()
    led = TrafficLedger()
    log: list = []
    resid = xs.astype(np.float32)
    sin, cos = rope_angles_direct(dh, np.arange(t), cfg.rope_base)
    positions_decay = graph.decay.astype(np.float64)

    state = init_decode_state(cfg)
    for layer in range(cfg.num_layers):
        sig = np.array([sigma_inverse(r, graph.epsilon) for r in resid], dtype=np.float32)
        y_star = resid * graph.gammas[(layer, "attn")]
        x8 = _dyn_int8(y_star)
        q, cycles = _prefill_mmm(graph, layer, "q_proj", x8, cycles, led, log, hsa)
        k, cycles = _prefill_mmm(graph, layer, "k_proj", x8, cycles, led, log, hsa,
                                 transpose=True)
        k = k.T  # drained transposed; PPU consumes positions along rows again
        v, cycles = _prefill_mmm(graph, layer, "v_proj", x8, cycles, led, log, hsa)
        g, cycles = _prefill_mmm(graph, layer, "g_proj", x8, cycles, led, log, hsa)
        q = q * sig[:, None]
        k = k * sig[:, None]
        v = v * sig[:, None]
        g = g * sig[:, None]

        qh = rope_embed_at(q.reshape(t, heads, dh), sin[:, None, :], cos[:, None, :])
        kh = rope_embed_at(k.reshape(t, heads, dh), sin[:, None, :], cos[:, None, :])
        vh = v.reshape(t, heads, dh)

        ret = np.empty((t, heads, dh), dtype=np.float32)
        for h in range(heads):
            q8 = _dyn_int8(qh[:, h])
            k8t = _dyn_int8(kh[:, h].T)
            acc, cyc = run_mmm(q8, k8t, cfg=hsa)
            cycles = cycles + cyc
            led.add_macs(t * dh * t)
            led.add_dram("activations", t * dh + dh * t + t * t)
            led.add_sram_read("act_sram", cyc.compute_cycles * (hsa.pe_rows + hsa.pe_cols))
            led.add_sram_write("act_sram", t * dh + dh * t + t * t)
            log.append((layer, f"retention{h}.qkT", (t, dh), False))
            scores = acc.astype(np.float32) * np.float32(q8.scale * k8t.scale)
            gamma_h = positions_decay[h]
            ii, jj = np.meshgrid(np.arange(t), np.arange(t), indexing="ij")
            mask = np.where(ii >= jj, gamma_h ** (ii - jj), 0.0).astype(np.float32)
            masked = scores * mask
            a8 = _dyn_int8(masked)
            v8 = _dyn_int8(vh[:, h])
            acc2, cyc2 = run_mmm(a8, v8, cfg=hsa)
            cycles = cycles + cyc2
            led.add_macs(t * t * dh)
            led.add_dram("activations", t * t + t * dh + t * dh)
            led.add_sram_read("act_sram", cyc2.compute_cycles * (hsa.pe_rows + hsa.pe_cols))
            led.add_sram_write("act_sram", t * t + t * dh + t * dh)
            log.append((layer, f"retention{h}.av", (t, t), False))
            ret[:, h] = acc2.astype(np.float32) * np.float32(a8.scale * v8.scale)
            # final-state handoff for decode: the last token's rank-1 update
            # carries weight gamma^0
            decays = (gamma_h ** (t - 1 - np.arange(t))).astype(np.float32)
            state.retention[layer, h] = np.einsum(
                "t,td,te->de", decays, kh[:, h], vh[:, h]
            ).astype(np.float32)

        gated = activation(g, SILU) * ret.reshape(t, -1)
        g8 = _dyn_int8(gated)
        o, cycles = _prefill_mmm(graph, layer, "o_proj", g8, cycles, led, log, hsa)
        resid = resid + o

        sig = np.array([sigma_inverse(r, graph.epsilon) for r in resid], dtype=np.float32)
        y_star = resid * graph.gammas[(layer, "ffn")]
        u8 = _dyn_int8(y_star)
        up, cycles = _prefill_mmm(graph, layer, "ffn_up", u8, cycles, led, log, hsa)
        up = up * sig[:, None]
        d8 = _dyn_int8(activation(up, SILU))
        down, cycles = _prefill_mmm(graph, layer, "ffn_down", d8, cycles, led, log, hsa)
        resid = resid + down
        stripes = -(-t // hsa.pe_rows)
        led.add_dram("weights", stripes * (2 * cfg.hidden_dim * 4 + cfg.num_heads * 4))

    led.add_dram("weights", -(-t // hsa.pe_rows) * cfg.hidden_dim * 4)  # final gamma
    final_sig = np.array([sigma_inverse(r, graph.epsilon) for r in resid], dtype=np.float32)
    outputs = resid * final_sig[:, None] * graph.gammas["final"]
    state.rope_mem = init_angle_memory(cfg.head_dim, cfg.rope_base)
    for _ in range(t):
        rope_update(state.rope_mem)
    state.token_index = t
    return PrefillResult(outputs=outputs, state=state, cycles=cycles, ledger=led,
                         dispatch_log=log)


# ── Floating-point reference path ────────────────────────────────────────


def reference_forward(
    graph: LayerGraph,
    token_ids,
    mode: str = "decode",
) -> tuple[np.ndarray, np.ndarray]:
    """Pure real-arithmetic forward pass over the same graph (float64).

    `mode="decode"` feeds tokens one at a time through the recurrent
    retention; `mode="prefill"` uses the parallel form with the decay mask.
    Both return ([T, d] outputs, final retention states [L, H, dh, dh]).
    """
    cfg = graph.cfg
    if graph.weights is None:
        raise ConfigError("reference_forward needs materialized weights")
    xs = input_vectors(graph.seed, token_ids, cfg.hidden_dim).astype(np.float64)
    t = xs.shape[0]
    heads, dh = cfg.num_heads, cfg.head_dim
    ws = {k: v.astype(np.float64) for k, v in graph.weights.items()}
    decay = graph.decay.astype(np.float64)
    eps = graph.epsilon
    theta = np.arange(t)
    sin, cos = rope_angles_direct(dh, theta, cfg.rope_base)
    sin = sin.astype(np.float64)
    cos = cos.astype(np.float64)

    def rms(v):
        return v / np.sqrt(np.mean(np.square(v), axis=-1, keepdims=True) + eps)

    def silu(v):
        return v / (1.0 + np.exp(-v))

    def rot(x, s, c):
        out = np.empty_like(x)
        out[..., 0::2] = x[..., 0::2] * c - x[..., 1::2] * s
        out[..., 1::2] = x[..., 1::2] * c + x[..., 0::2] * s
        return out

    states = np.zeros((cfg.num_layers, heads, dh, dh), dtype=np.float64)

    if mode == "decode":
        outs = np.empty((t, cfg.hidden_dim), dtype=np.float64)
        for step in range(t):
            resid = xs[step]
            for layer in range(cfg.num_layers):
                xn = rms(resid) * graph.gammas[(layer, "attn")]
                q = ws[(layer, "q_proj")] @ xn
                k = ws[(layer, "k_proj")] @ xn
                v = ws[(layer, "v_proj")] @ xn
                g = ws[(layer, "g_proj")] @ xn
                qh = rot(q.reshape(heads, dh), sin[step], cos[step])
                kh = rot(k.reshape(heads, dh), sin[step], cos[step])
                vh = v.reshape(heads, dh)
                s = states[layer]
                s *= decay[:, None, None]
                s += kh[:, :, None] * vh[:, None, :]
                ret = np.einsum("hd,hde->he", qh, s)
                gated = silu(g) * ret.reshape(-1)
                resid = resid + ws[(layer, "o_proj")] @ gated
                xf = rms(resid) * graph.gammas[(layer, "ffn")]
                up = ws[(layer, "ffn_up")] @ xf
                resid = resid + ws[(layer, "ffn_down")] @ silu(up)
            outs[step] = rms(resid) * graph.gammas["final"]
        return outs, states

    if mode == "prefill":
        resid = xs.copy()
        for layer in range(cfg.num_layers):
            xn = rms(resid) * graph.gammas[(layer, "attn")]
            q = xn @ ws[(layer, "q_proj")].T
            k = xn @ ws[(layer, "k_proj")].T
            v = xn @ ws[(layer, "v_proj")].T
            g = xn @ ws[(layer, "g_proj")].T
            qh = rot(q.reshape(t, heads, dh), sin[:, None, :], cos[:, None, :])
            kh = rot(k.reshape(t, heads, dh), sin[:, None, :], cos[:, None, :])
            vh = v.reshape(t, heads, dh)
            ii, jj = np.meshgrid(np.arange(t), np.arange(t), indexing="ij")
            ret = np.empty((t, heads, dh), dtype=np.float64)
            for h in range(heads):
                mask = np.where(ii >= jj, decay[h] ** (ii - jj), 0.0)
                scores = (qh[:, h] @ kh[:, h].T) * mask
                ret[:, h] = scores @ vh[:, h]
                decays = decay[h] ** (t - 1 - np.arange(t))
                states[layer, h] = np.einsum("t,td,te->de", decays, kh[:, h], vh[:, h])
            gated = silu(g) * ret.reshape(t, -1)
            resid = resid + gated @ ws[(layer, "o_proj")].T
            xf = rms(resid) * graph.gammas[(layer, "ffn")]
            up = xf @ ws[(layer, "ffn_up")].T
            resid = resid + silu(up) @ ws[(layer, "ffn_down")].T
        return rms(resid) * graph.gammas["final"], states

    raise ConfigError(f"unknown mode {mode!r}")


def sqnr_db(reference: np.ndarray, test: np.ndarray) -> float:
    """Signal-to-quantization-noise ratio in dB (report-only metric)."""
    ref = np.asarray(reference, dtype=np.float64)
    err = ref - np.asarray(test, dtype=np.float64)
    denom = float(np.square(err).sum())
    if denom == 0:
        return float("inf")
    return 10.0 * math.log10(float(np.square(ref).sum()) / denom)
