"""Figure rendering for run and comparison reports.

All figures are written straight to files; the CSV outputs remain the data
contract and these plots are a convenience layer over them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import ComparisonReport
from .simulator import RunReport

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.axisbelow": True,
})

_GROUP_CMAP = plt.get_cmap("viridis")


def repetition_figure(report: RunReport, path: str | Path) -> Path:
    """Bar chart of the makespan per repetition for one scenario run."""
    path = Path(path)
    reps = [row.rep for row in report.rows]
    makespans = [row.makespan for row in report.rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(reps, makespans, color="tab:blue", width=0.7)
    ax.axhline(report.makespan_gmean, color="tab:red", ls="--", lw=1, label="geometric mean")
    ax.set_xlabel("repetition")
    ax.set_ylabel("makespan [s]")
    ax.set_title(f"{report.scheduler}: makespan per repetition")
    ax.set_xticks(reps)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def comparison_makespan_figure(report: ComparisonReport, path: str | Path) -> Path:
    """Grouped bars: geometric-mean makespan per scheduler, one group per scenario."""
    path = Path(path)
    scenarios = list(report.scenario_ids)
    schedulers = list(report.schedulers)
    width = 0.8 / max(1, len(schedulers))
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(scenarios), 3.6))
    for j, sched in enumerate(schedulers):
        xs, ys, errs = [], [], []
        for i, scenario in enumerate(scenarios):
            cell = report.cell(scenario, sched)
            if not cell.ok:
                continue
            xs.append(i + (j - (len(schedulers) - 1) / 2) * width)
            ys.append(cell.makespan_gmean)
            errs.append(cell.makespan_std)
        ax.bar(xs, ys, width=width, yerr=errs, capsize=2, label=sched)
    ax.set_xticks(range(len(scenarios)))
    ax.set_xticklabels(scenarios, rotation=15, ha="right", fontsize=8)
    ax.set_ylabel("makespan geometric mean [s]")
    ax.set_title("scheduler comparison")
    ax.legend(fontsize=8, ncol=min(5, len(schedulers)))
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def comparison_group_share_figure(report: ComparisonReport, path: str | Path) -> Path:
    """Stacked bars of the per-group instance shares for every cell."""
    path = Path(path)
    cells = [c for c in report.cells if c.ok and c.group_fractions]
    labels = [f"{c.scenario_id}\n{c.scheduler}" for c in cells]
    k = max((len(c.group_fractions) for c in cells), default=1)
    fig, ax = plt.subplots(figsize=(1.6 + 0.65 * len(cells), 3.6))
    bottoms = [0.0] * len(cells)
    for g in range(k):
        heights = [c.group_fractions[g] if g < len(c.group_fractions) else 0.0 for c in cells]
        ax.bar(range(len(cells)), heights, bottom=bottoms,
               color=_GROUP_CMAP(g / max(1, k - 1) * 0.85), label=f"group {g}")
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("share of instances")
    ax.set_ylim(0, 1.02)
    ax.set_title("per-group assignment distribution")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_comparison_figures(report: ComparisonReport, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        comparison_makespan_figure(report, outdir / "makespans.png"),
        comparison_group_share_figure(report, outdir / "group_shares.png"),
    ]
