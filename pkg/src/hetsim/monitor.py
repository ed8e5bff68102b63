"""Phase 2: persist task traces and label tasks via capacity-weighted percentiles.

For each feature the node groups, sorted by their rank label, contribute
cumulative capacity fractions p_0=0 < p_1 <= ... < p_n=1. Applying those
fractions to the sorted usage values observed for the workflow yields cut
values that tile [0, +inf) into n half-open intervals; a task's label is the
1-based rank of the interval its mean usage falls into.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from math import ceil, inf
from pathlib import Path
from typing import Sequence

from .model import TaskTrace, ValidationError
from .profiler import NodeGroup, NodeGroupSet

FEATURES = ("cpu", "mem", "io")

_USAGE_FIELD = {"cpu": "cpu_util_pct", "mem": "mem_gb_used", "io": "io_mb_per_s"}

TRACE_CSV_HEADER = ["workflow_id", "task_name", "runtime_s", "cpu_util_pct", "mem_gb_used", "io_mb_per_s", "node_id", "seq"]


class NoTraceDataError(LookupError):
    """The store holds no traces for the requested workflow."""


class _Agg:
    """Incremental count + sums; means must always match recomputation."""

    __slots__ = ("count", "runtime", "cpu", "mem", "io")

    def __init__(self) -> None:
        self.count = 0
        self.runtime = 0.0
        self.cpu = 0.0
        self.mem = 0.0
        self.io = 0.0

    def add(self, t: TaskTrace) -> None:
        self.count += 1
        self.runtime += t.runtime_s
        self.cpu += t.cpu_util_pct
        self.mem += t.mem_gb_used
        self.io += t.io_mb_per_s

    def means(self) -> dict[str, float]:
        c = self.count
        return {
            "runtime_s": self.runtime / c,
            "cpu_util_pct": self.cpu / c,
            "mem_gb_used": self.mem / c,
            "io_mb_per_s": self.io / c,
        }


class TraceStore:
    """Append-only store of task traces with incremental aggregates.

    Single writer; the simulator drives it single-threaded and the comparison
    harness gives every scenario its own store.
    """

    def __init__(self) -> None:
        self._traces: list[TaskTrace] = []
        self._by_task: dict[tuple[str, str], _Agg] = {}
        self._by_workflow: dict[str, _Agg] = {}
        self._wf_traces: dict[str, list[TaskTrace]] = {}

    def __len__(self) -> int:
        return len(self._traces)

    @property
    def traces(self) -> tuple[TaskTrace, ...]:
        return tuple(self._traces)

    def record(self, trace: TaskTrace) -> None:
        """Append one trace and update the aggregates for its keys."""
        self._traces.append(trace)
        self._by_task.setdefault((trace.workflow_id, trace.task_name), _Agg()).add(trace)
        self._by_workflow.setdefault(trace.workflow_id, _Agg()).add(trace)
        self._wf_traces.setdefault(trace.workflow_id, []).append(trace)

    def observe(
        self,
        task_name: str,
        workflow_id: str,
        runtime_s: float,
        cpu_util_pct: float,
        mem_gb_used: float,
        io_mb_per_s: float,
        node_id: str,
    ) -> TaskTrace:
        """Build a trace with the next sequence number and record it."""
        trace = TaskTrace(
            task_name=task_name,
            workflow_id=workflow_id,
            runtime_s=runtime_s,
            cpu_util_pct=cpu_util_pct,
            mem_gb_used=mem_gb_used,
            io_mb_per_s=io_mb_per_s,
            node_id=node_id,
            seq=len(self._traces),
        )
        self.record(trace)
        return trace

    def task_count(self, workflow_id: str, task_name: str) -> int:
        agg = self._by_task.get((workflow_id, task_name))
        return 0 if agg is None else agg.count

    def task_means(self, workflow_id: str, task_name: str) -> dict[str, float] | None:
        agg = self._by_task.get((workflow_id, task_name))
        return None if agg is None else agg.means()

    def mean_runtime(self, workflow_id: str, task_name: str) -> float | None:
        means = self.task_means(workflow_id, task_name)
        return None if means is None else means["runtime_s"]

    def task_names(self, workflow_id: str) -> list[str]:
        return sorted(t for (wf, t) in self._by_task if wf == workflow_id)

    def workflow_means(self, workflow_id: str) -> dict[str, float] | None:
        agg = self._by_workflow.get(workflow_id)
        return None if agg is None else agg.means()

    def usage_values(self, workflow_id: str, feature: str, cross_workflow: bool = False) -> list[float]:
        """Raw per-instance usage values feeding the percentile cuts."""
        field = _USAGE_FIELD[feature]
        if cross_workflow:
            rows: Sequence[TaskTrace] = self._traces
        else:
            rows = self._wf_traces.get(workflow_id, [])
        return [getattr(t, field) for t in rows]

    # -- persistence (CSV, append-only discipline) --

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_CSV_HEADER)
            for t in self._traces:
                writer.writerow(
                    [t.workflow_id, t.task_name, t.runtime_s, t.cpu_util_pct, t.mem_gb_used, t.io_mb_per_s, t.node_id, t.seq]
                )

    @classmethod
    def load(cls, path: str | Path) -> "TraceStore":
        store = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TRACE_CSV_HEADER:
                raise ValidationError(f"unexpected trace file header in {path}: {reader.fieldnames}")
            for row in reader:
                store.record(
                    TaskTrace(
                        task_name=row["task_name"],
                        workflow_id=row["workflow_id"],
                        runtime_s=float(row["runtime_s"]),
                        cpu_util_pct=float(row["cpu_util_pct"]),
                        mem_gb_used=float(row["mem_gb_used"]),
                        io_mb_per_s=float(row["io_mb_per_s"]),
                        node_id=row["node_id"],
                        seq=int(row["seq"]),
                    )
                )
        return store


def record_trace(store: TraceStore, trace: TaskTrace) -> TraceStore:
    """Operation form of :meth:`TraceStore.record`; returns the updated store."""
    store.record(trace)
    return store


@dataclass(frozen=True)
class TaskLabels:
    """Per-feature demand labels for a task; None means unknown (all-or-nothing)."""

    cpu: int | None
    mem: int | None
    io: int | None

    @classmethod
    def unknown(cls) -> "TaskLabels":
        return cls(cpu=None, mem=None, io=None)

    @property
    def known(self) -> bool:
        return self.cpu is not None

    def as_tuple(self) -> tuple[int, int, int]:
        if not self.known:
            raise ValidationError("cannot take label tuple of an unknown task")
        return (self.cpu, self.mem, self.io)  # type: ignore[return-value]

    def __str__(self) -> str:
        if not self.known:
            return "unknown"
        return f"cpu={self.cpu} mem={self.mem} io={self.io}"


@dataclass(frozen=True)
class PercentileBoundaries:
    """Cumulative capacity fractions and the usage cut values they induce."""

    feature: str
    fractions: tuple[float, ...]   # p_0 .. p_n
    cuts: tuple[float, ...]        # v_{p_1} .. v_{p_{n-1}}, ascending
    group_order: tuple[int, ...]   # group indices, weakest label first

    def interval_index(self, value: float) -> int:
        """1-based rank of the half-open interval containing `value`.

        Intervals are [0, v_1), [v_1, v_2), ..., [v_{n-1}, +inf): a value
        exactly at a cut belongs to the upper interval.
        """
        if value < 0:
            raise ValidationError(f"usage value must be >= 0, got {value}")
        return bisect_right(self.cuts, value) + 1

    def intervals(self) -> list[tuple[float, float]]:
        bounds = [0.0, *self.cuts, inf]
        return list(zip(bounds[:-1], bounds[1:]))


def percentile_fractions(capacities: Sequence[float]) -> tuple[float, ...]:
    """Cumulative capacity shares p_0=0 .. p_n=1 (final value forced to 1)."""
    if not capacities:
        raise ValidationError("need at least one capacity value")
    if any(c <= 0 for c in capacities):
        raise ValidationError("capacities must be positive")
    total = sum(capacities)
    fractions = [0.0]
    partial = 0.0
    for c in capacities[:-1]:
        partial += c
        fractions.append(partial / total)
    fractions.append(1.0)
    return tuple(fractions)


def group_capacity(group: NodeGroup, feature: str) -> float:
    """Per-feature capacity measure: cores for cpu, GB for mem, node count for io."""
    if feature == "cpu":
        return float(group.total_cpus)
    if feature == "mem":
        return float(group.total_mem_gb)
    if feature == "io":
        return float(len(group.members))
    raise ValidationError(f"unknown feature {feature!r}")


def _quantile_lower_nearest_rank(sorted_sample: Sequence[float], p: float) -> float:
    n = len(sorted_sample)
    idx = max(0, min(n - 1, ceil(p * n) - 1))
    return sorted_sample[idx]


def boundaries(
    groups: NodeGroupSet,
    store: TraceStore,
    workflow_id: str,
    feature: str,
    cross_workflow: bool = False,
) -> PercentileBoundaries:
    """Build the labeling intervals for one feature of one workflow.

    Groups are ordered ascending by the feature's rank label (ties by group
    mean, then index); their capacity shares give the cumulative fractions,
    and the fractions' lower-nearest-rank quantiles of the workflow's sorted
    usage values give the cuts. Raises :class:`NoTraceDataError` when the
    workflow has no traces yet, in which case all tasks must be treated as
    unknown by the caller.
    """
    if feature not in FEATURES:
        raise ValidationError(f"unknown feature {feature!r}; expected one of {FEATURES}")
    if not groups.labeled:
        raise ValidationError("groups must be labeled before boundaries are computed")
    _label_dim = {"cpu": "cpu", "mem": "mem", "io": "io"}[feature]
    ordered = sorted(
        groups.groups,
        key=lambda g: (getattr(g.labels, _label_dim), g.basis_means[_label_dim], g.index),
    )
    fractions = percentile_fractions([group_capacity(g, feature) for g in ordered])
    sample = sorted(store.usage_values(workflow_id, feature, cross_workflow=cross_workflow))
    if not sample:
        raise NoTraceDataError(f"no traces recorded for workflow {workflow_id!r}")
    cuts = tuple(_quantile_lower_nearest_rank(sample, p) for p in fractions[1:-1])
    return PercentileBoundaries(
        feature=feature,
        fractions=fractions,
        cuts=cuts,
        group_order=tuple(g.index for g in ordered),
    )


def label_task(
    store: TraceStore,
    groups: NodeGroupSet,
    workflow_id: str,
    task_name: str,
    cross_workflow: bool = False,
) -> TaskLabels:
    """Label a task from its historic mean usage, or return unknown labels.

    A task with no recorded history is unknown in every feature; otherwise
    each feature's mean usage is located in that feature's intervals and the
    label is the 1-based interval rank.
    """
    means = store.task_means(workflow_id, task_name)
    if means is None:
        return TaskLabels.unknown()
    values: dict[str, int] = {}
    for feature in FEATURES:
        b = boundaries(groups, store, workflow_id, feature, cross_workflow=cross_workflow)
        values[feature] = b.interval_index(means[_USAGE_FIELD[feature]])
    return TaskLabels(cpu=values["cpu"], mem=values["mem"], io=values["io"])
