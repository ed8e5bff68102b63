"""Command-line interface: profile, labels, simulate, compare, gen-*."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import clusters, harness, plots
from .allocator import SCHEDULER_NAMES, write_audit_csv
from .model import load_cluster, load_workflow, save_cluster, save_workflow
from .monitor import FEATURES, NoTraceDataError, TraceStore, boundaries, label_task
from .profiler import group_report, normalize_features, profile_cluster
from .simulator import (
    DEFAULT_ALPHA,
    SimScenario,
    WORKFLOW_PROFILES,
    run,
    synthesize_workflow,
    write_report_csv,
)


def _cmd_profile(args: argparse.Namespace) -> int:
    nodes = load_cluster(args.cluster)
    k_range = None
    if args.kmin is not None or args.kmax is not None:
        enabled = sum(1 for n in nodes if n.enabled)
        kmin = args.kmin if args.kmin is not None else 2
        kmax = args.kmax if args.kmax is not None else min(6, enabled - 1)
        k_range = range(kmin, kmax + 1)
    groups = profile_cluster(nodes, k_range=k_range, seed=args.seed)
    matrix = normalize_features(nodes)
    report = group_report(groups, matrix)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    print(f"grouped {len(groups.membership)} nodes into {groups.k} group(s)"
          + (" [single-group fallback]" if groups.fallback else ""))
    for g in groups.groups:
        print(f"  group {g.index}: {len(g.members)} nodes, labels {g.labels}, "
              f"{g.total_cpus} cores, {g.total_mem_gb:g} GB")
    print(f"wrote {args.out}")
    return 0


def _cmd_labels(args: argparse.Namespace) -> int:
    nodes = load_cluster(args.cluster)
    groups = profile_cluster(nodes, seed=args.seed)
    store = TraceStore.load(args.store)
    print(f"workflow {args.workflow_id!r}: {groups.k} group(s)")
    try:
        for feature in FEATURES:
            b = boundaries(groups, store, args.workflow_id, feature, cross_workflow=args.cross_workflow)
            spans = ", ".join(
                f"[{lo:g}, {'inf' if hi == float('inf') else f'{hi:g}'})" for lo, hi in b.intervals()
            )
            print(f"  {feature}: fractions {tuple(round(p, 4) for p in b.fractions)} intervals {spans}")
    except NoTraceDataError:
        print("  no traces for this workflow; every task is unknown")
        return 0
    for task in store.task_names(args.workflow_id):
        labels = label_task(store, groups, args.workflow_id, task, cross_workflow=args.cross_workflow)
        print(f"  task {task}: {labels}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    nodes = load_cluster(args.cluster)
    workflows = []
    for i, part in enumerate(args.workflow.split(",")):
        arrival = args.arrivals[i] if args.arrivals and i < len(args.arrivals) else 0.0
        workflows.append((load_workflow(part), arrival))
    scenario = SimScenario(
        nodes=tuple(nodes),
        workflows=tuple(workflows),
        scheduler=args.scheduler,
        seed=args.seed,
        repetitions=args.reps,
        warm_start=args.warm_start,
        disable_fraction=args.disable,
        alpha=args.alpha,
    )
    store = TraceStore.load(args.store) if args.store and Path(args.store).exists() else TraceStore()
    report = run(scenario, store)
    print(f"{args.scheduler}: {args.reps} repetition(s), "
          f"makespan gmean {report.makespan_gmean:.2f}s mean {report.makespan_mean:.2f}s "
          f"std {report.makespan_std:.2f}s")
    if args.store and args.warm_start:
        store.save(args.store)
        print(f"store now holds {len(store)} traces -> {args.store}")
    if args.report:
        write_report_csv(report, args.report)
        print(f"wrote {args.report}")
        if args.figures:
            fig = plots.repetition_figure(report, Path(args.report).with_suffix(".png"))
            print(f"wrote {fig}")
    if args.audit:
        decisions = [d for row in report.rows for d in row.decisions]
        write_audit_csv(decisions, args.audit)
        print(f"wrote {args.audit}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    spec = harness.load_comparison_spec(args.spec)
    report = harness.compare(spec)
    paths = harness.write_comparison_csvs(report, args.outdir)
    for path in paths.values():
        print(f"wrote {path}")
    if args.figures:
        for fig in plots.render_comparison_figures(report, args.outdir):
            print(f"wrote {fig}")
    failed = [c for c in report.cells if not c.ok]
    for cell in failed:
        print(f"cell ({cell.scenario_id}, {cell.scheduler}) failed: {cell.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_gen_cluster(args: argparse.Namespace) -> int:
    nodes = clusters.demo_cluster(args.shape, seed=args.seed)
    save_cluster(nodes, args.out)
    print(f"wrote {len(nodes)}-node cluster ({args.shape}) to {args.out}")
    return 0


def _cmd_gen_workflow(args: argparse.Namespace) -> int:
    dag = synthesize_workflow(args.profile, args.size, args.seed)
    save_workflow(dag, args.out)
    total = sum(t.instances for t in dag.tasks)
    print(f"wrote workflow {dag.workflow_id} ({len(dag.tasks)} tasks, {total} instances) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="group a cluster's nodes and write the assignment file")
    p.add_argument("--cluster", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmin", type=int, default=None)
    p.add_argument("--kmax", type=int, default=None)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("labels", help="print percentile boundaries and task labels for a workflow")
    p.add_argument("--cluster", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--workflow-id", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-workflow", action="store_true")
    p.set_defaults(func=_cmd_labels)

    p = sub.add_parser("simulate", help="run one scenario and write its report")
    p.add_argument("--cluster", required=True)
    p.add_argument("--workflow", required=True, help="workflow file, or several comma-separated")
    p.add_argument("--scheduler", required=True, choices=SCHEDULER_NAMES)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--disable", type=float, default=0.0, choices=[0.0, 0.2, 0.4])
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--store", default=None, help="trace CSV; loaded if present, saved back with --warm-start")
    p.add_argument("--report", default=None, help="report CSV output path")
    p.add_argument("--audit", default=None, help="decision audit CSV output path")
    p.add_argument("--arrivals", type=lambda s: [float(x) for x in s.split(",")], default=None)
    p.add_argument("--warm-start", action="store_true", help="reuse the trace store across repetitions")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_simulate, figures=True)

    p = sub.add_parser("compare", help="run a scheduler comparison matrix from a spec file")
    p.add_argument("--spec", required=True, help="comparison spec (.json or .toml)")
    p.add_argument("--outdir", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_compare, figures=True)

    p = sub.add_parser("gen-cluster", help="write a synthetic demo cluster file")
    p.add_argument("--shape", required=True, choices=clusters.CLUSTER_SHAPES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_cluster)

    p = sub.add_parser("gen-workflow", help="write a synthetic workflow file")
    p.add_argument("--profile", required=True, choices=WORKFLOW_PROFILES)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_workflow)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
