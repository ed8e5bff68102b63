"""Deterministic discrete-event simulation of workflow DAGs on a modeled cluster.

The event loop processes task-ready and task-finished events in (time,
sequence) order; after draining each timestamp the selected scheduler is
offered the pending instances one at a time in ready order. Successor task
instances all become ready the moment the last instance of the last
predecessor task finishes. Every finished instance appends a trace to the
monitoring store, so recurring tasks become labelable across repetitions.
"""

from __future__ import annotations

import csv
import heapq
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .allocator import ClusterState, SchedContext, ScheduleDecision, make_scheduler
from .model import (
    NodeSpec,
    ResourceRequest,
    TaskBehavior,
    TaskDef,
    TaskInstance,
    ValidationError,
    WorkflowDag,
    validate_workflow,
)
from .monitor import TaskLabels, TraceStore, label_task
from .profiler import NodeGroupSet, profile_cluster

WORKFLOW_PROFILES = ("cpu_heavy", "mem_heavy", "mixed")

DEFAULT_ALPHA = 0.3


class SimulationDeadlock(RuntimeError):
    """No running work and a queued instance that can never be placed."""


@dataclass(frozen=True)
class SimScenario:
    """A reproducible experiment: cluster, workflows, scheduler, and knobs."""

    nodes: tuple[NodeSpec, ...]
    workflows: tuple[tuple[WorkflowDag, float], ...]  # (dag, arrival sim-seconds)
    scheduler: str
    seed: int = 0
    repetitions: int = 1
    warm_start: bool = False
    disable_fraction: float = 0.0
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be >= 1, got {self.repetitions}")
        if not 0.0 <= self.disable_fraction < 1.0:
            raise ValidationError(f"disable_fraction must be in [0, 1), got {self.disable_fraction}")
        if self.alpha < 0.0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if not self.workflows:
            raise ValidationError("scenario needs at least one workflow")
        for dag, arrival in self.workflows:
            validate_workflow(dag)
            if arrival < 0:
                raise ValidationError(f"arrival time must be >= 0, got {arrival}")


class EventQueue:
    """Time-ordered events; a monotone sequence number breaks time ties."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, str, object]] = []
        self._seq = 0

    def push(self, time: float, kind: str, payload: object) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def pop_time_batch(self) -> tuple[float, list[tuple[str, object]]]:
        """Pop every event sharing the earliest timestamp, in sequence order."""
        time = self._heap[0][0]
        batch: list[tuple[str, object]] = []
        while self._heap and self._heap[0][0] == time:
            _, _, kind, payload = heapq.heappop(self._heap)
            batch.append((kind, payload))
        return time, batch

    def __bool__(self) -> bool:
        return bool(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


def effective_runtime(
    behavior: TaskBehavior,
    node: NodeSpec,
    ref_speed: float,
    colocated_util_pct: float,
    alpha: float,
) -> float:
    """Realized runtime of an instance on a node.

    Scales the reference runtime by the node's CPU speed relative to the
    cluster-wide best, then by an interference multiplier driven by how far
    the summed utilization of the colocated instances (including this one,
    in cpu_util_pct units) oversubscribes the node's cores.
    """
    speed_scale = ref_speed / node.bench.cpu_events_per_s
    oversubscription = max(0.0, colocated_util_pct / 100.0 - node.cpus) / node.cpus
    return behavior.base_runtime_s * speed_scale * (1.0 + alpha * oversubscription)


@dataclass(frozen=True)
class InstanceRecord:
    """Realized timeline of one instance (for audits and verification)."""

    instance_id: str
    task_name: str
    workflow_id: str
    workflow_run_id: str
    node_id: str
    group: int
    submit_time: float
    start_time: float
    end_time: float


@dataclass(frozen=True)
class RepResult:
    rep: int
    makespan: float
    instances: int
    group_counts: tuple[int, ...]
    busy_core_seconds: tuple[float, ...]
    wait_mean: float
    wait_max: float
    decisions: tuple[ScheduleDecision, ...]
    records: tuple[InstanceRecord, ...]


@dataclass(frozen=True)
class RunReport:
    """Per-repetition outcomes plus makespan statistics across repetitions."""

    scheduler: str
    rows: tuple[RepResult, ...]
    makespan_mean: float
    makespan_std: float
    makespan_gmean: float
    groups: NodeGroupSet
    active_nodes: tuple[str, ...]


def restricted_active_set(groups: NodeGroupSet, fraction: float) -> tuple[str, ...]:
    """Drop floor(fraction * size) lowest node_ids from each group."""
    active: list[str] = []
    for g in groups.groups:
        members = sorted(g.members)
        drop = int(fraction * len(members))
        active.extend(members[drop:])
    return tuple(sorted(active))


class _WorkflowRun:
    """Book-keeping for one workflow arrival inside a repetition."""

    def __init__(self, run_id: str, dag: WorkflowDag, arrival: float):
        self.run_id = run_id
        self.dag = dag
        self.arrival = arrival
        self.task_map = dag.task_map
        self.pending_preds = {t.name: len(set(dag.predecessors(t.name))) for t in dag.tasks}
        self.instances_left = {t.name: t.instances for t in dag.tasks}
        self.instances: dict[str, list[TaskInstance]] = {}

    def make_instances(self, task_name: str) -> list[TaskInstance]:
        task = self.task_map[task_name]
        made = [
            TaskInstance(
                instance_id=f"{self.run_id}/{task_name}/{i:03d}",
                task_name=task_name,
                workflow_run_id=self.run_id,
            )
            for i in range(task.instances)
        ]
        self.instances[task_name] = made
        return made


class _Simulation:
    """One repetition of a scenario; strictly single-threaded."""

    def __init__(
        self,
        nodes: Sequence[NodeSpec],
        active: Sequence[str],
        groups: NodeGroupSet,
        scheduler_name: str,
        store: TraceStore,
        workflows: Sequence[tuple[WorkflowDag, float]],
        ref_speed: float,
        alpha: float,
        node_list: list[str],
    ):
        self.state = ClusterState(nodes, active=active)
        self.groups = groups
        self.store = store
        self.ref_speed = ref_speed
        self.alpha = alpha
        self.scheduler = make_scheduler(scheduler_name)
        self.scheduler.on_repetition_start(node_list)
        self.runs = [_WorkflowRun(f"{dag.workflow_id}#{i}", dag, arrival) for i, (dag, arrival) in enumerate(workflows)]
        self._run_by_id = {r.run_id: r for r in self.runs}
        self.ctx = SchedContext(
            state=self.state,
            groups=groups,
            store=store,
            node_list=node_list,
            workflow_of=lambda inst: self._run_by_id[inst.workflow_run_id].dag.workflow_id,
        )
        self.events = EventQueue()
        self.queue: list[TaskInstance] = []          # ready or queued, awaiting placement
        self.util_pct: dict[str, float] = {nid: 0.0 for nid in self.state.active}
        self.sticky_labels: dict[str, TaskLabels] = {}
        self.decisions: list[ScheduleDecision] = []
        self.records: list[InstanceRecord] = []
        self.all_instances: list[TaskInstance] = []
        self.traces_before = len(store)

    # -- event handlers --

    def _arrive(self, run: _WorkflowRun, t: float) -> None:
        roots = [name for name in run.pending_preds if run.pending_preds[name] == 0]
        for name in sorted(roots):
            for inst in run.make_instances(name):
                self.all_instances.append(inst)
                self.events.push(t, "ready", inst)

    def _ready(self, inst: TaskInstance, t: float) -> None:
        inst.mark_ready(t)
        self.queue.append(inst)

    def _finish(self, inst: TaskInstance, t: float) -> None:
        run = self._run_by_id[inst.workflow_run_id]
        task = run.task_map[inst.task_name]
        node_id = inst.assigned_node
        assert node_id is not None
        inst.mark_done(t)
        self.state.release(node_id, inst.instance_id, task.request)
        self.util_pct[node_id] -= task.behavior.cpu_util_pct
        self.store.observe(
            task_name=inst.task_name,
            workflow_id=run.dag.workflow_id,
            runtime_s=t - inst.start_time,
            cpu_util_pct=task.behavior.cpu_util_pct,
            mem_gb_used=task.behavior.mem_gb_used,
            io_mb_per_s=task.behavior.io_mb_per_s,
            node_id=node_id,
        )
        self.records.append(
            InstanceRecord(
                instance_id=inst.instance_id,
                task_name=inst.task_name,
                workflow_id=run.dag.workflow_id,
                workflow_run_id=run.run_id,
                node_id=node_id,
                group=self.groups.membership[node_id],
                submit_time=inst.submit_time,
                start_time=inst.start_time,
                end_time=t,
            )
        )
        run.instances_left[inst.task_name] -= 1
        if run.instances_left[inst.task_name] == 0:
            for succ in sorted(set(run.dag.successors(inst.task_name))):
                run.pending_preds[succ] -= 1
                if run.pending_preds[succ] == 0:
                    for new_inst in run.make_instances(succ):
                        self.all_instances.append(new_inst)
                        self.events.push(t, "ready", new_inst)

    # -- scheduling --

    def _labels_for(self, inst: TaskInstance) -> TaskLabels:
        # Labels are computed once, at first submission, and cached; a queued
        # instance must not pick up labels from siblings finishing later.
        if inst.instance_id not in self.sticky_labels:
            if self.scheduler.uses_labels:
                run = self._run_by_id[inst.workflow_run_id]
                self.sticky_labels[inst.instance_id] = label_task(
                    self.store, self.groups, run.dag.workflow_id, inst.task_name
                )
            else:
                self.sticky_labels[inst.instance_id] = TaskLabels.unknown()
        return self.sticky_labels[inst.instance_id]

    def _schedule_pass(self, t: float) -> int:
        self.ctx.time = t
        self.queue.sort(key=lambda i: (i.submit_time, i.instance_id))
        ordered = self.scheduler.order_queue(self.ctx, self.queue)
        assigned = 0
        for inst in ordered:
            labels = self._labels_for(inst)
            if inst.state == "ready":
                inst.mark_queued()
            run = self._run_by_id[inst.workflow_run_id]
            task = run.task_map[inst.task_name]
            decision = self.scheduler.pick(self.ctx, inst, task.request, labels)
            self.decisions.append(decision)
            if decision.node_id is None:
                continue
            node_id = decision.node_id
            self.state.assign(node_id, inst.instance_id, task.request)
            self.util_pct[node_id] += task.behavior.cpu_util_pct
            inst.mark_running(t, node_id)
            runtime = effective_runtime(
                task.behavior, self.state.node(node_id), self.ref_speed, self.util_pct[node_id], self.alpha
            )
            self.events.push(t + runtime, "finish", inst)
            self.queue.remove(inst)
            assigned += 1
        return assigned

    def _check_deadlock(self) -> None:
        for inst in self.queue:
            run = self._run_by_id[inst.workflow_run_id]
            request = run.task_map[inst.task_name].request
            fits_somewhere = any(
                self.state.node(nid).cpus >= request.cpus and self.state.node(nid).mem_gb >= request.mem_gb
                for nid in self.state.active
            )
            if not fits_somewhere:
                raise SimulationDeadlock(
                    f"instance {inst.instance_id} requests {request.cpus} cpus / {request.mem_gb} GB, "
                    f"which no enabled node can ever satisfy"
                )
        # Exhaustive schedulers place anything that fits an idle cluster, so
        # reaching this point means a scheduler bug, not a workload problem.
        stuck = self.queue[0].instance_id if self.queue else "?"
        raise SimulationDeadlock(f"scheduler stalled with idle cluster and queued instance {stuck}")

    def execute(self) -> tuple[float, float]:
        for run in self.runs:
            self.events.push(run.arrival, "arrival", run)
        while self.events:
            t, batch = self.events.pop_time_batch()
            for kind, payload in batch:
                if kind == "arrival":
                    self._arrive(payload, t)
                elif kind == "ready":
                    self._ready(payload, t)
                elif kind == "finish":
                    self._finish(payload, t)
            self._schedule_pass(t)
            if not self.events and self.queue:
                self._check_deadlock()
        not_done = [i.instance_id for i in self.all_instances if i.state != "done"]
        if not_done:
            raise SimulationDeadlock(f"instances never completed: {not_done[:5]}")
        first_submit = min(i.submit_time for i in self.all_instances)
        last_end = max(i.end_time for i in self.all_instances)
        return first_submit, last_end


def run(scenario: SimScenario, store: TraceStore | None = None) -> RunReport:
    """Execute a scenario and return its report; deterministic given the seed.

    With warm_start the passed (or a fresh) store accumulates traces across
    repetitions; without it every repetition starts from a snapshot of the
    passed store, so pre-loaded history still informs labels but repetitions
    stay independent.
    """
    enabled = [n for n in scenario.nodes if n.enabled]
    groups = profile_cluster(enabled, seed=scenario.seed)
    ref_speed = max(n.bench.cpu_events_per_s for n in enabled)
    active = restricted_active_set(groups, scenario.disable_fraction)
    base_store = store if store is not None else TraceStore()

    rows: list[RepResult] = []
    for rep in range(scenario.repetitions):
        if scenario.warm_start:
            rep_store = base_store
        else:
            rep_store = _snapshot(base_store)
        rng = np.random.default_rng([scenario.seed, rep])
        node_list = [active[i] for i in rng.permutation(len(active))]
        sim = _Simulation(
            nodes=enabled,
            active=active,
            groups=groups,
            scheduler_name=scenario.scheduler,
            store=rep_store,
            workflows=scenario.workflows,
            ref_speed=ref_speed,
            alpha=scenario.alpha,
            node_list=node_list,
        )
        first_submit, last_end = sim.execute()
        waits = [r.start_time - r.submit_time for r in sim.records]
        request_cpus = {
            (dag.workflow_id, t.name): t.request.cpus for dag, _ in scenario.workflows for t in dag.tasks
        }
        group_counts = [0] * groups.k
        busy = [0.0] * groups.k
        for r in sim.records:
            group_counts[r.group] += 1
            busy[r.group] += (r.end_time - r.start_time) * request_cpus[(r.workflow_id, r.task_name)]
        rows.append(
            RepResult(
                rep=rep,
                makespan=last_end - first_submit,
                instances=len(sim.records),
                group_counts=tuple(group_counts),
                busy_core_seconds=tuple(busy),
                wait_mean=statistics.fmean(waits),
                wait_max=max(waits),
                decisions=tuple(sim.decisions),
                records=tuple(sorted(sim.records, key=lambda r: r.instance_id)),
            )
        )

    makespans = [row.makespan for row in rows]
    return RunReport(
        scheduler=scenario.scheduler,
        rows=tuple(rows),
        makespan_mean=statistics.fmean(makespans),
        makespan_std=statistics.pstdev(makespans),
        makespan_gmean=statistics.geometric_mean(makespans),
        groups=groups,
        active_nodes=active,
    )


def _snapshot(store: TraceStore) -> TraceStore:
    copy = TraceStore()
    for trace in store.traces:
        copy.record(trace)
    return copy


# ---------------------------------------------------------------------------
# synthetic workloads


_PROFILE_INDEX = {name: i for i, name in enumerate(WORKFLOW_PROFILES)}

# Per-category behavior ranges: (cpu_util_pct, mem_gb_used, io_mb_per_s, base_runtime_s)
_CATEGORY_RANGES = {
    "cpu": ((155.0, 200.0), (0.5, 2.0), (5.0, 60.0), (40.0, 150.0)),
    "memh": ((40.0, 100.0), (3.5, 5.0), (5.0, 60.0), (30.0, 120.0)),
    "light": ((10.0, 60.0), (0.3, 1.5), (1.0, 30.0), (5.0, 25.0)),
}

_DEFAULT_REQUEST = ResourceRequest(cpus=2, mem_gb=5.0)

# Fork-join shape knobs: instance fan-out of middle tasks and tasks per stage
# (both are half-open rng.integers bounds). Fan-outs are sized so ready
# batches of mid-size workflows overflow a premium node group and placement
# order actually matters.
_MIDDLE_INSTANCES = (4, 12)
_STAGE_WIDTH = (2, 5)


def _category_mix(profile: str, size: int) -> list[str]:
    if profile == "cpu_heavy":
        heavy = round(0.8 * size)
        return ["cpu"] * heavy + ["light"] * (size - heavy)
    if profile == "mem_heavy":
        heavy = round(0.7 * size)
        return ["memh"] * heavy + ["light"] * (size - heavy)
    third = size // 3
    mix = ["cpu"] * third + ["memh"] * third
    return mix + ["light"] * (size - len(mix))


def synthesize_workflow(profile: str, size: int, seed: int) -> WorkflowDag:
    """Generate a fork-join DAG whose tasks mimic the named usage profile.

    Deterministic in (profile, size, seed). Every task requests the default
    2 cpus / 5 GB; middle tasks fan out into 2..6 data-parallel instances.
    """
    if profile not in WORKFLOW_PROFILES:
        raise ValidationError(f"unknown profile {profile!r}; choose from {WORKFLOW_PROFILES}")
    if size < 1:
        raise ValidationError(f"size must be >= 1, got {size}")
    rng = np.random.default_rng([_PROFILE_INDEX[profile], size, seed])

    categories = _category_mix(profile, size)
    rng.shuffle(categories)

    tasks: list[TaskDef] = []
    for i, category in enumerate(categories):
        (ulo, uhi), (mlo, mhi), (ilo, ihi), (blo, bhi) = _CATEGORY_RANGES[category]
        behavior = TaskBehavior(
            base_runtime_s=float(rng.uniform(blo, bhi)),
            cpu_util_pct=float(rng.uniform(ulo, uhi)),
            mem_gb_used=float(rng.uniform(mlo, mhi)),
            io_mb_per_s=float(rng.uniform(ilo, ihi)),
        )
        instances = int(rng.integers(*_MIDDLE_INSTANCES)) if 0 < i < size - 1 else 1
        tasks.append(
            TaskDef(name=f"task{i:02d}", instances=instances, request=_DEFAULT_REQUEST, behavior=behavior)
        )

    # Fork-join shape: single source and sink, middle tasks in stages of 1-3
    # parallel tasks, consecutive stages fully connected.
    edges: list[tuple[str, str]] = []
    if size > 1:
        stages: list[list[int]] = [[0]]
        middle_ids = list(range(1, size - 1))
        pos = 0
        while pos < len(middle_ids):
            width = int(rng.integers(*_STAGE_WIDTH))
            stages.append(middle_ids[pos : pos + width])
            pos += width
        stages.append([size - 1])
        for prev, cur in zip(stages[:-1], stages[1:]):
            for a in prev:
                for b in cur:
                    edges.append((tasks[a].name, tasks[b].name))

    dag = WorkflowDag(workflow_id=f"{profile}-s{size}-r{seed}", tasks=tuple(tasks), edges=tuple(edges))
    return validate_workflow(dag)


# ---------------------------------------------------------------------------
# report serialization


REPORT_CSV_HEADER = [
    "row", "rep", "makespan_s", "instances", "wait_mean_s", "wait_max_s",
    "group_counts", "makespan_mean_s", "makespan_std_s", "makespan_gmean_s",
]


def write_report_csv(report: RunReport, path) -> None:
    """One CSV row per repetition plus a summary row with the aggregates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_HEADER)
        for row in report.rows:
            counts = ";".join(f"{g}:{c}" for g, c in enumerate(row.group_counts))
            writer.writerow(
                ["rep", row.rep, row.makespan, row.instances, row.wait_mean, row.wait_max, counts, "", "", ""]
            )
        writer.writerow(
            ["summary", "", "", "", "", "", "", report.makespan_mean, report.makespan_std, report.makespan_gmean]
        )
