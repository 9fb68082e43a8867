"""Acceptance suite: one test per criterion, each printing a PASS line.

A6's LISO decode-share clause is implemented faithfully and expected to
fail: on a 0.256 TOPS array a 750-token prompt is necessarily
compute-bound-dominant, so decode cannot exceed 80% of LISO runtime while
the same config stays within 2x of the reference throughput (the reference
comparison's own end-to-end numbers imply a ~24% LISO decode share). It is
marked strict-xfail rather than weakened.
"""

import time

import numpy as np
import pytest

from hsasim.baselines import CONV_SA, HSA, VECTOR_UNIT, model_scenario
from hsasim.hsa import HsaConfig, run_mmm, run_mvm
from hsasim.memsys import MemConfig
from hsasim.ppu import (
    NORM_STREAM_CHUNK,
    NormParams,
    fused_rmsnorm_matmul,
    init_angle_memory,
    rope_embed,
    rope_frequencies,
    rope_update,
    unfused_rmsnorm_matmul,
)
from hsasim.quant import (
    WEIGHT_HEADER_BYTES,
    Int8Tensor,
    MxInt4Tensor,
    export_weights,
    mxint4_file_bytes,
    quantize_mxint4,
)
from hsasim.report import run_scenario
from hsasim.roofline import roofline_scenario
from hsasim.workload import (
    MODEL_PRESETS,
    SCENARIO_PRESETS,
    ModelConfig,
    model_decode_footprint_bytes,
)

BIG = MODEL_PRESETS["retnet-1.3b-like"]
LISO = SCENARIO_PRESETS["liso"]
SILO = SCENARIO_PRESETS["silo"]
CFG = HsaConfig()
MEM = MemConfig()


def _ok(criterion: str, detail: str) -> None:
    print(f"{criterion} PASS: {detail}")


def _mx(mantissas, codes) -> MxInt4Tensor:
    mant = np.asarray(mantissas, dtype=np.int8)
    return MxInt4Tensor(
        rows=mant.shape[0], cols=mant.shape[1], group_size=16,
        mantissas=mant, shift_codes=np.asarray(codes, dtype=np.uint8),
        tensor_scale=2.0**-11,
    )


class TestA1DequantPathBitExact:
    def test_exhaustive_scalar_sweep(self):
        # 15 codes x 16 mantissas x 256 activations = 61,440 cases
        mant = np.zeros((240, 1), dtype=np.int8)
        codes = np.zeros((15, 1), dtype=np.uint8)
        for code in range(15):
            codes[code, 0] = code
            for idx, m in enumerate(range(-8, 8)):
                mant[16 * code + idx, 0] = m
        w = _mx(mant, codes)
        checked = 0
        for x in range(-128, 128):
            out, _ = run_mvm(w, Int8Tensor(values=np.array([x], dtype=np.int8),
                                           scale=1.0), CFG)
            for code in range(15):
                base = 16 * code
                for idx, m in enumerate(range(-8, 8)):
                    assert out[base + idx] == m * x * (1 << code)
                    checked += 1
        assert checked == 61_440
        _ok("A1a", f"{checked} scalar shifter/bucket/drain cases exact")

    def test_ten_thousand_random_mvms(self):
        rng = np.random.default_rng(2024)
        start = time.monotonic()
        for trial in range(10_000):
            mant = rng.integers(-8, 8, size=(64, 128), dtype=np.int64).astype(np.int8)
            codes = rng.integers(0, 15, size=(4, 128), dtype=np.int64).astype(np.uint8)
            w = _mx(mant, codes)
            x = Int8Tensor(
                values=rng.integers(-128, 128, size=128, dtype=np.int64).astype(np.int8),
                scale=1.0,
            )
            got, _ = run_mvm(w, x, CFG)
            # direct-formula oracle, evaluated in wide integers
            code_e = np.repeat(codes.astype(np.int64), 16, axis=0)
            want = (
                mant.astype(np.int64)
                * x.values.astype(np.int64)[None, :]
                * (np.int64(1) << code_e)
            ).sum(axis=1)
            assert np.array_equal(got.astype(np.int64), want), trial
        elapsed = time.monotonic() - start
        _ok("A1b", f"10,000 random 64x128 MVMs bit-equal in {elapsed:.1f}s")


class TestA2MmmExactness:
    def test_triple_loop_oracle_small(self):
        rng = np.random.default_rng(7)
        for m, k, n in [(48, 32, 48), (21, 17, 33)]:
            a = rng.integers(-128, 128, size=(m, k), dtype=np.int64)
            b = rng.integers(-128, 128, size=(k, n), dtype=np.int64)
            out, _ = run_mmm(
                Int8Tensor(values=a.astype(np.int8), scale=1.0),
                Int8Tensor(values=b.astype(np.int8), scale=1.0),
                cfg=CFG,
            )
            want = np.zeros((m, n), dtype=np.int64)
            for i in range(m):
                for j in range(n):
                    acc = 0
                    for kk in range(k):
                        acc += int(a[i, kk]) * int(b[kk, j])
                    want[i, j] = acc
            assert np.array_equal(out.astype(np.int64), want)
        _ok("A2a", "random MMMs equal the naive triple-loop oracle")

    def test_up_to_256_cubed(self):
        rng = np.random.default_rng(8)
        a = rng.integers(-128, 128, size=(256, 256), dtype=np.int64)
        b = rng.integers(-128, 128, size=(256, 256), dtype=np.int64)
        out, cycles = run_mmm(
            Int8Tensor(values=a.astype(np.int8), scale=1.0),
            Int8Tensor(values=b.astype(np.int8), scale=1.0),
            cfg=CFG,
        )
        want = np.einsum("ik,kj->ij", a, b)  # independent integer evaluation
        assert np.array_equal(out.astype(np.int64), want)
        tiles = 16 * 16
        assert cycles.drain_cycles == 16 * tiles  # exactly 16 per tile
        _ok("A2b", "256^3 MMM exact; drain is 16 cycles per tile")

    def test_single_tile_drain_and_transpose(self):
        ones = Int8Tensor(values=np.ones((16, 16), dtype=np.int8), scale=1.0)
        out, cycles = run_mmm(ones, ones, cfg=CFG)
        assert cycles.drain_cycles == 16
        rng = np.random.default_rng(9)
        a = Int8Tensor(values=rng.integers(-128, 128, size=(40, 24),
                                           dtype=np.int64).astype(np.int8), scale=1.0)
        b = Int8Tensor(values=rng.integers(-128, 128, size=(24, 50),
                                           dtype=np.int64).astype(np.int8), scale=1.0)
        plain, _ = run_mmm(a, b, transpose_out=False, cfg=CFG)
        trans, _ = run_mmm(a, b, transpose_out=True, cfg=CFG)
        assert np.array_equal(trans, plain.T)
        _ok("A2c", "tile drain = 16 cycles; transpose drain equals transpose")


class TestA3PeakThroughput:
    def test_peak_tops_exact(self):
        assert CFG.peak_tops == 0.256  # 256 PEs x 2 ops x 500 MHz
        rep = run_scenario(BIG, SILO)
        assert rep["peak"]["tops"] == 0.256
        _ok("A3", "peak throughput reported as exactly 0.256 TOPS")


class TestA4FullUtilizationDecode:
    def test_no_stalls_and_stream_within_bandwidth(self):
        start = time.monotonic()
        rep = run_scenario(BIG, SILO)
        elapsed = time.monotonic() - start
        decode = rep["phases"]["decode"]
        assert decode["cycles"]["stall"] == 0
        assert rep["peak"]["mvm_weight_stream_gbps"] == 17.0
        assert rep["peak"]["mvm_weight_stream_within_bandwidth"]
        assert 17.0e9 <= MEM.dram_bandwidth_bytes_per_s
        assert elapsed < 60.0
        _ok(
            "A4",
            f"decode stall cycles = 0; weight stream 17 GB/s <= 51.2 GB/s "
            f"(analytic run {elapsed:.2f}s)",
        )


class TestA5DecodeEnergyBracket:
    def test_energy_per_token_bracket(self):
        rep = run_scenario(BIG, SILO)
        mj = rep["totals"]["decode_energy_per_token_mj"]
        assert 21.0 <= mj <= 30.0
        # DRAM floor: the quantized footprint at 32 pJ/B
        footprint = model_decode_footprint_bytes(BIG)
        floor_mj = footprint * 32e-12 * 1e3
        decode = rep["phases"]["decode"]
        per_tok_dram_mj = decode["energy"]["dram_j"] / SILO.output_tokens * 1e3
        assert per_tok_dram_mj == pytest.approx(floor_mj, rel=1e-9)
        assert floor_mj == pytest.approx(21.94, abs=0.1)
        # the on-chip remainder split is itemized in the report
        for key in ("sram_j", "mac_j", "static_j"):
            assert decode["energy"][key] > 0
        _ok(
            "A5",
            f"decode energy {mj:.2f} mJ/token in [21, 30]; DRAM floor "
            f"{floor_mj:.2f} mJ with itemized on-chip remainder",
        )


class TestA6EndToEndRates:
    def test_rate_brackets_and_oracle_equality(self):
        for scen, ref_tps in ((LISO, 138.3), (SILO, 37.6)):
            rep = run_scenario(BIG, scen)
            got = rep["totals"]["tokens_per_s"]
            assert ref_tps / 2 <= got <= ref_tps * 2, scen.name
            oracle = roofline_scenario(BIG, scen, MEM, CFG)
            # hard gate: exact equality with the closed-form roofline oracle
            assert rep["phases"]["prefill"]["cycles"]["total"] == oracle.prefill.cycles.total
            assert rep["phases"]["decode"]["cycles"]["total"] == oracle.decode.cycles.total
            assert (
                rep["phases"]["prefill"]["traffic"]["dram_bytes"]["total"]
                == oracle.prefill.ledger.dram_bytes_total
            )
            assert (
                rep["phases"]["decode"]["traffic"]["dram_bytes"]["total"]
                == oracle.decode.ledger.dram_bytes_total
            )
            assert rep["phases"]["prefill"]["seconds"] == oracle.prefill.seconds
            assert rep["phases"]["decode"]["seconds"] == oracle.decode.seconds
            assert got == oracle.tokens_per_s
        _ok("A6a", "LISO/SILO rates inside the 2x band and equal to the "
                   "closed-form oracle exactly")

    def test_decode_share_silo(self):
        rep = run_scenario(BIG, SILO)
        frac = rep["totals"]["decode_runtime_fraction"]
        assert frac > 0.8
        _ok("A6b", f"SILO decode share {frac:.1%} > 80%")

    @pytest.mark.xfail(
        strict=True,
        reason=(
            "unattainable as specified: at 0.256 TOPS the 750-token LISO "
            "prefill is compute-bound (~8.2 s) against ~2.1 s of decode, a "
            "~20% decode share; the reference comparison's own end-to-end "
            "numbers imply ~24%. Decode > 80% cannot hold simultaneously "
            "with the 2x throughput band and the exact 0.256 TOPS peak."
        ),
    )
    def test_decode_share_liso(self):
        rep = run_scenario(BIG, LISO)
        frac = rep["totals"]["decode_runtime_fraction"]
        print(f"A6c EXPECTED FAIL: LISO decode share {frac:.1%} <= 80%")
        assert frac > 0.8


class TestA7BaselineRatios:
    def test_conv_sa_ratio_bracket(self):
        h = model_scenario(HSA, BIG, LISO, MEM, CFG)
        c = model_scenario(CONV_SA, BIG, LISO, MEM, CFG)
        ratio = c.tokens_per_s / h.tokens_per_s
        assert 0.52 <= ratio <= 0.78
        _ok("A7a", f"conventional-SA/HSA LISO ratio {ratio:.3f} in [0.52, 0.78]")

    def test_vector_unit_prefill_energy(self):
        h = model_scenario(HSA, BIG, LISO, MEM, CFG)
        v = model_scenario(VECTOR_UNIT, BIG, LISO, MEM, CFG)
        ratio = v.prefill_energy_j / h.prefill_energy_j
        assert ratio >= 1.3
        _ok("A7b", f"vector-unit prefill energy {ratio:.2f}x HSA (>= 1.3x)")

    def test_vector_unit_decode_equals_hsa(self):
        for scen in (LISO, SILO):
            h = model_scenario(HSA, BIG, scen, MEM, CFG)
            v = model_scenario(VECTOR_UNIT, BIG, scen, MEM, CFG)
            assert v.tokens_per_s == h.tokens_per_s
            assert v.decode_seconds == h.decode_seconds
        _ok("A7c", "vector-unit decode tokens/s equals HSA's")


class TestA8FusedRmsNorm:
    def test_thousand_instances_and_structure(self):
        rng = np.random.default_rng(88)
        worst = 0.0
        for _ in range(1000):
            dim = int(rng.integers(2, 64)) * 2
            out_dim = int(rng.integers(1, 32))
            y = rng.normal(size=dim) * rng.uniform(0.1, 10)
            gamma = rng.normal(size=dim)
            beta = rng.normal(size=dim) if rng.random() < 0.5 else None
            w = rng.normal(size=(out_dim, dim))
            s = float(rng.uniform(0.01, 2.0))
            norm = NormParams(gamma=gamma, beta=beta, epsilon=1e-6)
            fused = fused_rmsnorm_matmul(y, norm, w, s)
            unfused = unfused_rmsnorm_matmul(y, norm, w, s)
            denom = max(np.abs(unfused).max(), 1e-30)
            worst = max(worst, np.abs(fused - unfused).max() / denom)
        assert worst <= 1e-5
        # structural: the norm path buffers a constant number of scalars,
        # independent of the layer dimension
        for dim in (256, 4096):
            trace = []
            fused_rmsnorm_matmul(
                rng.normal(size=dim), NormParams(gamma=np.ones(dim)),
                rng.normal(size=(4, dim)), 1.0, trace=trace,
            )
            bufs = [ev for ev in trace if ev[0] == "norm_buffer_elems"]
            assert bufs == [("norm_buffer_elems", NORM_STREAM_CHUNK)]
            stages = [ev[0] for ev in trace]
            assert stages.index("sigma_ready") > max(
                i for i, s_ in enumerate(stages) if s_ == "stream"
            )
        _ok(
            "A8",
            f"1000 fused-vs-unfused instances, worst relative deviation "
            f"{worst:.2e} <= 1e-5; norm path buffers {NORM_STREAM_CHUNK} "
            f"scalars regardless of dimension",
        )


class TestA9RopeRecurrence:
    def test_drift_and_norm_preservation(self):
        mem = init_angle_memory(BIG.head_dim, renorm_every=256)
        for _ in range(4096):
            rope_update(mem)
        theta = rope_frequencies(BIG.head_dim)
        err = max(
            np.abs(mem.sin_m.astype(np.float64) - np.sin(4096 * theta)).max(),
            np.abs(mem.cos_m.astype(np.float64) - np.cos(4096 * theta)).max(),
        )
        assert err <= 1e-4
        rng = np.random.default_rng(99)
        x = rng.normal(size=BIG.head_dim).astype(np.float32)
        out = rope_embed(x, mem)
        before = np.hypot(x[0::2], x[1::2]).astype(np.float64)
        after = np.hypot(out[0::2], out[1::2]).astype(np.float64)
        rel = (np.abs(after - before) / np.maximum(before, 1e-12)).max()
        assert rel <= 1e-4
        _ok(
            "A9",
            f"4096-step recurrence error {err:.2e} <= 1e-4; pair norms "
            f"preserved to {rel:.2e}",
        )


class TestA10QuantizationBounds:
    def test_gaussian_error_bound_everywhere(self):
        rng = np.random.default_rng(123)
        w = rng.normal(size=(256, 128))
        t = quantize_mxint4(w)
        from hsasim.quant import dequantize_oracle

        deq = dequantize_oracle(t)
        shifts = np.repeat(t.shift_codes.astype(np.int64) - 9, 16, axis=0)[:256]
        step = 2.0 ** (shifts - 2)
        raw = np.rint(w / step)
        off_clamp = raw <= 7
        assert (np.abs(w - deq)[off_clamp] <= (step / 2)[off_clamp]).all()
        _ok("A10a", "per-element |w - w_hat| <= 2^(S-3) off the clamp, "
                    "checked across a Gaussian tensor")

    def test_file_footprint_exact(self, tmp_path):
        rows, cols = 1024, 512
        t = quantize_mxint4(np.random.default_rng(5).normal(size=(rows, cols)))
        path = str(tmp_path / "w.mxw4")
        nbytes = export_weights(t, path)
        n = rows * cols
        assert nbytes == WEIGHT_HEADER_BYTES + n // 2 + n // 32
        assert (nbytes - WEIGHT_HEADER_BYTES) / n == 0.53125
        assert mxint4_file_bytes(rows, cols) == nbytes
        _ok("A10b", "file footprint exactly 0.53125 B/weight + header")

    def test_decode_traffic_halves_vs_int8(self):
        int8_cfg = ModelConfig(
            num_layers=BIG.num_layers, hidden_dim=BIG.hidden_dim,
            ffn_dim=BIG.ffn_dim, num_heads=BIG.num_heads,
            head_dim=BIG.head_dim, weight_precision="INT8", name="int8",
        )
        mx_bytes = model_decode_footprint_bytes(BIG)
        int8_bytes = model_decode_footprint_bytes(int8_cfg)
        shared = int8_bytes - BIG.matrix_param_count  # gammas and decay
        ratio = (mx_bytes - shared) / BIG.matrix_param_count
        assert abs(ratio - 0.5) <= 1.0 / 32 + 1e-9
        _ok("A10c", f"MXINT4 weight stream {ratio:.5f}x the INT8 stream "
                    "(half within the 1/32 code overhead)")
