"""Scheduler-comparison experiments: scheduler x scenario matrices over one cluster.

Every cell (scheduler, scenario) runs with a fresh trace store; within a cell
the repetitions warm-start by default, and the initial repetition is excluded
from the aggregates (it is the run that first populates the store). Failed
cells are marked and do not abort the remaining matrix.
"""

from __future__ import annotations

import csv
import json
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .model import NodeSpec, ValidationError, WorkflowDag, load_cluster, load_workflow
from .monitor import TraceStore
from .simulator import (
    DEFAULT_ALPHA,
    RepResult,
    RunReport,
    SimScenario,
    SimulationDeadlock,
    run,
    synthesize_workflow,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version dependent
    import tomli as tomllib


@dataclass(frozen=True)
class ScenarioEntry:
    scenario_id: str
    workflows: tuple[tuple[WorkflowDag, float], ...]


@dataclass(frozen=True)
class ComparisonSpec:
    """A scheduler x scenario comparison matrix sharing one cluster."""

    cluster: tuple[NodeSpec, ...]
    scenarios: tuple[ScenarioEntry, ...]
    schedulers: tuple[str, ...]
    repetitions: int = 3
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    disable_fraction: float = 0.0
    warm_start: bool = True
    include_initial: bool = False    # count repetition 0 in the aggregates?
    seed_initial_traces: bool = True  # keep repetition 0's traces in the warm store?

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be >= 1, got {self.repetitions}")
        if not self.scenarios:
            raise ValidationError("comparison needs at least one scenario")
        if not self.schedulers:
            raise ValidationError("comparison needs at least one scheduler")


@dataclass(frozen=True)
class CellResult:
    scenario_id: str
    scheduler: str
    report: RunReport | None
    error: str | None
    included: tuple[RepResult, ...]
    makespan_gmean: float | None
    makespan_mean: float | None
    makespan_std: float | None
    group_counts: tuple[int, ...]
    group_fractions: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ComparisonReport:
    schedulers: tuple[str, ...]
    scenario_ids: tuple[str, ...]
    cells: tuple[CellResult, ...]
    # (scenario_id, scheduler_a, scheduler_b) -> % makespan decrease of a vs b
    improvements: dict[tuple[str, str, str], float]

    def cell(self, scenario_id: str, scheduler: str) -> CellResult:
        for c in self.cells:
            if c.scenario_id == scenario_id and c.scheduler == scheduler:
                return c
        raise KeyError((scenario_id, scheduler))


def _run_cell(spec: ComparisonSpec, entry: ScenarioEntry, scheduler: str) -> tuple[RunReport, tuple[RepResult, ...]]:
    scenario = SimScenario(
        nodes=spec.cluster,
        workflows=entry.workflows,
        scheduler=scheduler,
        seed=spec.seed,
        repetitions=spec.repetitions,
        warm_start=spec.warm_start,
        disable_fraction=spec.disable_fraction,
        alpha=spec.alpha,
    )
    if spec.warm_start and not spec.seed_initial_traces and spec.repetitions > 1:
        # Strict protocol: the initial run neither counts nor seeds the store.
        initial = run(replace(scenario, repetitions=1), TraceStore())
        rest = run(replace(scenario, repetitions=spec.repetitions - 1), TraceStore())
        rows = (initial.rows[0],) + tuple(replace(r, rep=r.rep + 1) for r in rest.rows)
        makespans = [r.makespan for r in rows]
        report = RunReport(
            scheduler=scheduler,
            rows=rows,
            makespan_mean=statistics.fmean(makespans),
            makespan_std=statistics.pstdev(makespans),
            makespan_gmean=statistics.geometric_mean(makespans),
            groups=rest.groups,
            active_nodes=rest.active_nodes,
        )
    else:
        report = run(scenario, TraceStore())
    if spec.include_initial or len(report.rows) == 1:
        included = report.rows
    else:
        included = report.rows[1:]
    return report, included


def compare(spec: ComparisonSpec) -> ComparisonReport:
    """Run the full matrix; returns per-cell aggregates and pairwise improvements."""
    cells: list[CellResult] = []
    for entry in spec.scenarios:
        for scheduler in spec.schedulers:
            try:
                report, included = _run_cell(spec, entry, scheduler)
            except (SimulationDeadlock, ValidationError) as exc:
                cells.append(
                    CellResult(
                        scenario_id=entry.scenario_id, scheduler=scheduler, report=None,
                        error=str(exc), included=(), makespan_gmean=None, makespan_mean=None,
                        makespan_std=None, group_counts=(), group_fractions=(),
                    )
                )
                continue
            makespans = [r.makespan for r in included]
            k = report.groups.k
            counts = [0] * k
            for row in included:
                for g, c in enumerate(row.group_counts):
                    counts[g] += c
            total = sum(counts)
            cells.append(
                CellResult(
                    scenario_id=entry.scenario_id,
                    scheduler=scheduler,
                    report=report,
                    error=None,
                    included=included,
                    makespan_gmean=statistics.geometric_mean(makespans),
                    makespan_mean=statistics.fmean(makespans),
                    makespan_std=statistics.pstdev(makespans),
                    group_counts=tuple(counts),
                    group_fractions=tuple(c / total for c in counts) if total else (),
                )
            )

    improvements: dict[tuple[str, str, str], float] = {}
    by_key = {(c.scenario_id, c.scheduler): c for c in cells}
    for entry in spec.scenarios:
        for a in spec.schedulers:
            for b in spec.schedulers:
                if a == b:
                    continue
                ca, cb = by_key[(entry.scenario_id, a)], by_key[(entry.scenario_id, b)]
                if ca.ok and cb.ok:
                    improvements[(entry.scenario_id, a, b)] = 100.0 * (1.0 - ca.makespan_gmean / cb.makespan_gmean)
    return ComparisonReport(
        schedulers=spec.schedulers,
        scenario_ids=tuple(e.scenario_id for e in spec.scenarios),
        cells=tuple(cells),
        improvements=improvements,
    )


# ---------------------------------------------------------------------------
# CSV outputs


def write_comparison_csvs(report: ComparisonReport, outdir: str | Path) -> dict[str, Path]:
    """Write report.csv (raw rows), summary.csv (aggregates + pairwise improvements),
    and groups.csv (per-group assignment counts)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": outdir / "report.csv",
        "summary": outdir / "summary.csv",
        "groups": outdir / "groups.csv",
    }

    with open(paths["report"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "scheduler", "rep", "included", "makespan_s", "instances", "wait_mean_s", "wait_max_s"])
        for cell in report.cells:
            if cell.report is None:
                continue
            included_reps = {r.rep for r in cell.included}
            for row in cell.report.rows:
                writer.writerow(
                    [cell.scenario_id, cell.scheduler, row.rep, int(row.rep in included_reps),
                     row.makespan, row.instances, row.wait_mean, row.wait_max]
                )

    with open(paths["summary"], "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["scenario", "scheduler", "status", "reps_included", "makespan_gmean", "makespan_mean", "makespan_std"]
        header += [f"improvement_vs_{s}" for s in report.schedulers]
        writer.writerow(header)
        for cell in report.cells:
            row = [
                cell.scenario_id, cell.scheduler,
                "ok" if cell.ok else f"failed: {cell.error}",
                len(cell.included),
                cell.makespan_gmean if cell.ok else "",
                cell.makespan_mean if cell.ok else "",
                cell.makespan_std if cell.ok else "",
            ]
            for other in report.schedulers:
                value = report.improvements.get((cell.scenario_id, cell.scheduler, other))
                row.append("" if value is None else value)
            writer.writerow(row)

    with open(paths["groups"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "scheduler", "group", "instances", "fraction"])
        for cell in report.cells:
            for g, (count, frac) in enumerate(zip(cell.group_counts, cell.group_fractions)):
                writer.writerow([cell.scenario_id, cell.scheduler, g, count, frac])

    return paths


# ---------------------------------------------------------------------------
# spec files (JSON or TOML)


def load_comparison_spec(path: str | Path) -> ComparisonSpec:
    """Read a comparison spec file; workflow paths resolve relative to it.

    Workflow entries are either {"path": ..., "arrival": ...} or synthetic
    {"profile": ..., "size": ..., "seed": ..., "arrival": ...}.
    """
    path = Path(path)
    if path.suffix == ".toml":
        data = tomllib.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    base = path.parent

    cluster = tuple(load_cluster(base / data["cluster"]))
    scenarios = []
    for i, entry in enumerate(data["scenarios"]):
        workflows = []
        for w in entry["workflows"]:
            arrival = float(w.get("arrival", 0.0))
            if "path" in w:
                dag = load_workflow(base / w["path"])
            else:
                dag = synthesize_workflow(w["profile"], int(w["size"]), int(w.get("seed", 0)))
            workflows.append((dag, arrival))
        scenarios.append(ScenarioEntry(scenario_id=str(entry.get("id", f"scenario{i}")), workflows=tuple(workflows)))

    return ComparisonSpec(
        cluster=cluster,
        scenarios=tuple(scenarios),
        schedulers=tuple(data.get("schedulers", ("tarema", "rr", "fair", "fill", "sjfn"))),
        repetitions=int(data.get("repetitions", 3)),
        seed=int(data.get("seed", 0)),
        alpha=float(data.get("alpha", DEFAULT_ALPHA)),
        disable_fraction=float(data.get("disable", 0.0)),
        warm_start=bool(data.get("warm_start", True)),
        include_initial=bool(data.get("include_initial", False)),
        seed_initial_traces=bool(data.get("seed_initial_traces", True)),
    )
