"""Matplotlib rendering of report data: stacked energy/latency breakdowns
per phase and grouped architecture-comparison bars. Figures are written as
PNG files next to the delimited report output."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

ENERGY_COMPONENTS = [("dram_j", "DRAM"), ("sram_j", "SRAM"),
                     ("mac_j", "MAC"), ("static_j", "static")]
PHASE_COLORS = {"prefill": "#4878d0", "decode": "#ee854a"}


def render_simulation_figures(report: dict, outdir: str) -> list[str]:
    """Energy and latency breakdowns for one scenario run, plus a phases CSV."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    phases = report["phases"]
    names = list(phases)

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    bottoms = [0.0] * len(names)
    for key, label in ENERGY_COMPONENTS:
        vals = [phases[p]["energy"][key] * 1e3 for p in names]
        ax.bar(names, vals, bottom=bottoms, label=label)
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    ax.set_ylabel("energy (mJ)")
    ax.set_title(
        f"{report['meta']['model']} / {report['meta']['scenario']} "
        f"({report['meta']['arch']})"
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(outdir, "energy_breakdown.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    secs = [phases[p_]["seconds"] for p_ in names]
    ax.barh(names, secs, color=[PHASE_COLORS.get(n, "#777") for n in names])
    ax.set_xlabel("seconds")
    frac = report["totals"]["decode_runtime_fraction"]
    ax.set_title(f"runtime split (decode {frac:.1%})")
    fig.tight_layout()
    p = os.path.join(outdir, "latency_breakdown.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(p)

    csv_path = os.path.join(outdir, "phases.csv")
    with open(csv_path, "w") as fh:
        fh.write("phase,seconds,cycles_total,dram_bytes,energy_j,utilization\n")
        for name in names:
            ph = phases[name]
            fh.write(
                f"{name},{ph['seconds']},{ph['cycles']['total']},"
                f"{ph['traffic']['dram_bytes']['total']},"
                f"{ph['energy']['total_j']},{ph['utilization']}\n"
            )
    paths.append(csv_path)
    return paths


def render_compare_figure(rows: list[dict], outdir: str) -> str:
    """Grouped bars of tokens/s and tokens/J per architecture and scenario."""
    os.makedirs(outdir, exist_ok=True)
    scenarios = sorted({r["scenario"] for r in rows})
    archs = sorted({r["arch"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.6))
    width = 0.8 / len(archs)
    for ax, metric, label in (
        (axes[0], "tokens_per_s", "tokens / s"),
        (axes[1], "tokens_per_j", "tokens / J"),
    ):
        for i, arch in enumerate(archs):
            vals = []
            for scen in scenarios:
                match = [r for r in rows if r["arch"] == arch and r["scenario"] == scen]
                vals.append(match[0][metric] if match else 0.0)
            xs = [j + i * width for j in range(len(scenarios))]
            ax.bar(xs, vals, width=width, label=arch)
        ax.set_xticks([j + width * (len(archs) - 1) / 2 for j in range(len(scenarios))])
        ax.set_xticklabels(scenarios)
        ax.set_ylabel(label)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(outdir, "architecture_comparison.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return p
