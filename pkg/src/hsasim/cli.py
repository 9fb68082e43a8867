"""Command-line entry point.

Subcommands: `quantize` (FP weights -> MXW4 file), `simulate` (one scenario,
JSON report), `compare` (architecture table, CSV/JSON), `selftest`
(exhaustive scalar dequant-path and cycle-constant checks). Exit codes:
0 ok, 2 config error, 3 invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from .baselines import BASELINE_KINDS
from .errors import ConfigError, SimError, WeightFileError
from .hsa import HsaConfig, run_mmm, run_mvm
from .memsys import MemConfig
from .quant import (
    Int8Tensor,
    MxInt4Tensor,
    export_weights,
    import_weights,
    quantize_mxint4,
)
from .report import (
    compare_architectures,
    compare_pivot,
    report_to_json,
    run_scenario,
    write_compare_csv,
)
from .workload import MODEL_PRESETS, SCENARIO_PRESETS, ModelConfig, ScenarioConfig


def load_model_config(spec: str, extras: dict | None = None) -> ModelConfig:
    """A preset name, or a JSON file of dimensions (optionally keyed off a
    preset with overrides). A `seed` key in the file lands in `extras`."""
    if spec in MODEL_PRESETS:
        return MODEL_PRESETS[spec]
    with open(spec) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid JSON ({exc})") from exc
    if "seed" in data and extras is not None:
        extras["seed"] = data["seed"]
    data.pop("seed", None)
    base: dict = {}
    if "preset" in data:
        preset = data.pop("preset")
        if preset not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset {preset!r}")
        base = asdict(MODEL_PRESETS[preset])
    base.update(data)
    base.setdefault("name", os.path.splitext(os.path.basename(spec))[0])
    try:
        return ModelConfig(**base)
    except TypeError as exc:
        raise ConfigError(f"{spec}: {exc}") from exc


def load_scenario_config(spec: str, extras: dict | None = None) -> ScenarioConfig:
    """A preset name, or a JSON file with prompt/output token counts and an
    optional `arch` choice (landed in `extras`)."""
    if spec in SCENARIO_PRESETS:
        return SCENARIO_PRESETS[spec]
    with open(spec) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid JSON ({exc})") from exc
    if "arch" in data and extras is not None:
        extras["arch"] = data["arch"]
    data.pop("arch", None)
    if "preset" in data:
        preset = data.pop("preset")
        if preset not in SCENARIO_PRESETS:
            raise ConfigError(f"unknown scenario preset {preset!r}")
        data = {**asdict(SCENARIO_PRESETS[preset]), **data}
    data.setdefault("name", os.path.splitext(os.path.basename(spec))[0])
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{spec}: {exc}") from exc


def _cmd_quantize(args) -> int:
    weights = np.load(args.input)
    tensor = quantize_mxint4(weights, group_size=args.group_size,
                             global_scale=args.global_scale)
    nbytes = export_weights(tensor, args.out)
    back = import_weights(args.out)
    if not (
        np.array_equal(back.mantissas, tensor.mantissas)
        and np.array_equal(back.shift_codes, tensor.shift_codes)
    ):
        raise SimError("write/readback mismatch")  # pragma: no cover
    per_weight = nbytes / (tensor.rows * tensor.cols)
    print(
        f"quantized [{tensor.rows} x {tensor.cols}] -> {args.out}: "
        f"{nbytes} bytes ({per_weight:.5f} B/weight)"
    )
    return 0


def _cmd_simulate(args) -> int:
    extras: dict = {}
    model = load_model_config(args.model, extras)
    scenario = load_scenario_config(args.scenario, extras)
    # explicit flags win over file-provided seed/arch
    seed = args.seed if args.seed is not None else extras.get("seed", 0)
    arch = args.arch if args.arch is not None else extras.get("arch", "hsa")
    mem = MemConfig()
    if args.mem_bandwidth is not None:
        mem = replace(mem, dram_bandwidth_bytes_per_s=args.mem_bandwidth)
    report = run_scenario(model, scenario, arch=arch, mem=mem, seed=seed)
    t = report["totals"]
    print(
        f"{arch} / {model.name} / {scenario.name}: "
        f"{t['tokens_per_s']:.1f} tokens/s, {t['tokens_per_j']:.2f} tokens/J, "
        f"decode share {t['decode_runtime_fraction']:.1%}"
    )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report_to_json(report))
        print(f"report written to {args.out}")
    if args.figures:
        from .figures import render_simulation_figures

        for path in render_simulation_figures(report, args.figures):
            print(f"figure written to {path}")
    return 0


def _cmd_compare(args) -> int:
    model = load_model_config(args.model)
    scenarios = [load_scenario_config(s) for s in args.scenarios.split(",")]
    archs = args.archs.split(",")
    for arch in archs:
        if arch not in BASELINE_KINDS:
            raise ConfigError(f"unknown architecture {arch!r}")
    mem = MemConfig()
    if args.mem_bandwidth is not None:
        mem = replace(mem, dram_bandwidth_bytes_per_s=args.mem_bandwidth)
    rows = compare_architectures(model, scenarios, archs, mem)
    for row in rows:
        print(
            f"{row['arch']:>8} {row['scenario']:>6}: "
            f"{row['tokens_per_s']:8.1f} tokens/s  "
            f"{row['tokens_per_j']:8.2f} tokens/J"
        )
    if args.out:
        write_compare_csv(rows, args.out)
        print(f"table written to {args.out}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"rows": rows, "pivot": compare_pivot(rows)}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
        print(f"json written to {args.json}")
    if args.figures:
        from .figures import render_compare_figure

        print(f"figure written to {render_compare_figure(rows, args.figures)}")
    return 0


def _cmd_selftest(args) -> int:
    """Exhaustive scalar dequant-path check plus cycle-constant assertions."""
    cfg = HsaConfig()
    # all 15 codes x 16 mantissas laid out as groups, swept over all 256
    # activation values: 61,440 scalar cases
    mant = np.zeros((240, 1), dtype=np.int8)
    codes = np.zeros((15, 1), dtype=np.uint8)
    for code in range(15):
        codes[code, 0] = code
        for idx, m in enumerate(range(-8, 8)):
            mant[16 * code + idx, 0] = m
    w = MxInt4Tensor(rows=240, cols=1, group_size=16, mantissas=mant,
                     shift_codes=codes, tensor_scale=2.0**-11)
    cases = 0
    for x in range(-128, 128):
        out, _ = run_mvm(w, Int8Tensor(values=np.array([x], dtype=np.int8),
                                       scale=1.0), cfg)
        for code in range(15):
            for idx, m in enumerate(range(-8, 8)):
                cases += 1
                expect = m * x * (1 << code)
                if out[16 * code + idx] != expect:
                    raise SimError(
                        f"dequant path mismatch: m={m} code={code} x={x}: "
                        f"{out[16 * code + idx]} != {expect}"
                    )
    print(f"scalar dequant path: {cases} cases exact")

    ones = Int8Tensor(values=np.ones((16, 16), dtype=np.int8), scale=1.0)
    out, cyc = run_mmm(ones, ones, cfg=cfg)
    if not (out == 16).all():
        raise SimError("16x16x16 MMM result wrong")
    if (cyc.compute_cycles, cyc.fill_cycles, cyc.drain_cycles) != (16, 30, 16):
        raise SimError(f"MMM tile cycle constants wrong: {cyc}")
    print("MMM tile cycles: compute 16 + fill 30 + drain 16")

    rng = np.random.default_rng(0)
    mant = rng.integers(-8, 8, size=(128, 64)).astype(np.int8)
    cvals = rng.integers(0, 15, size=(8, 64)).astype(np.uint8)
    w = MxInt4Tensor(rows=128, cols=64, group_size=16, mantissas=mant,
                     shift_codes=cvals, tensor_scale=2.0**-11)
    _, cyc = run_mvm(w, Int8Tensor(values=np.zeros(64, dtype=np.int8),
                                   scale=1.0), cfg)
    if cyc.compute_cycles != 2 * 64 or cyc.drain_cycles != 2 * 5:
        raise SimError(f"MVM cycle constants wrong: {cyc}")
    print("MVM group cycles: K per pass + 5-cycle drain")
    if cfg.peak_tops != 0.256:
        raise SimError(f"peak throughput {cfg.peak_tops} != 0.256 TOPS")
    print("peak throughput: 0.256 TOPS")
    print("selftest passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsasim",
        description="hybrid systolic array accelerator simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="quantize FP weights to an MXW4 file")
    q.add_argument("--input", required=True, help=".npy weight matrix")
    q.add_argument("--out", required=True, help="output .mxw4 path")
    q.add_argument("--group-size", type=int, default=16)
    q.add_argument("--global-scale", type=float, default=1.0)
    q.set_defaults(func=_cmd_quantize)

    s = sub.add_parser("simulate", help="run one scenario and emit a report")
    s.add_argument("--model", required=True,
                   help=f"preset ({', '.join(MODEL_PRESETS)}) or JSON file")
    s.add_argument("--scenario", required=True,
                   help=f"preset ({', '.join(SCENARIO_PRESETS)}) or JSON file")
    s.add_argument("--arch", default=None, choices=list(BASELINE_KINDS),
                   help="architecture (default hsa, or the scenario file's)")
    s.add_argument("--mem-bandwidth", type=float, default=None,
                   help="DRAM bandwidth in bytes/s (default 51.2e9)")
    s.add_argument("--out", default=None, help="write the JSON report here")
    s.add_argument("--seed", type=int, default=None,
                   help="run seed (default 0, or the model file's)")
    s.add_argument("--figures", default=None,
                   help="directory for rendered PNG figures + phases.csv")
    s.set_defaults(func=_cmd_simulate)

    c = sub.add_parser("compare", help="architecture comparison table")
    c.add_argument("--model", required=True)
    c.add_argument("--scenarios", default="liso,silo")
    c.add_argument("--archs", default=",".join(BASELINE_KINDS))
    c.add_argument("--mem-bandwidth", type=float, default=None)
    c.add_argument("--out", default=None, help="CSV output path")
    c.add_argument("--json", default=None, help="JSON output path")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--figures", default=None)
    c.set_defaults(func=_cmd_compare)

    t = sub.add_parser("selftest", help="exhaustive datapath and cycle checks")
    t.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WeightFileError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except SimError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
