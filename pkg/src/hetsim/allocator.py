"""Phase 3: score node-group/task pairs and pick nodes; baseline schedulers.

The score of a group against a task is the L1 distance between their label
vectors; smaller is a better match. The tarema policy walks the resulting
priority list (score ascending, power sum descending, group index) and takes
the least-loaded feasible node of the first feasible group. Unknown tasks go
to the least-loaded feasible node cluster-wide. Round-robin, fair, fill-nodes
and SJFN are provided as baselines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .model import NodeSpec, ResourceRequest, TaskInstance, ValidationError
from .monitor import TaskLabels, TraceStore
from .profiler import NodeGroupSet

SCHEDULER_NAMES = ("tarema", "rr", "fair", "fill", "sjfn")

AUDIT_CSV_HEADER = ["instance_id", "scheduler", "group", "node", "score", "rationale", "sim_time"]


class OvercommitError(ValidationError):
    """An assignment would exceed a node's free resources."""


def score(group_labels: Sequence[int], task_labels: Sequence[int]) -> int:
    """L1 distance between a group's and a task's label vectors."""
    if len(group_labels) != len(task_labels):
        raise ValidationError(f"label arity mismatch: {len(group_labels)} vs {len(task_labels)}")
    return sum(abs(int(n) - int(t)) for n, t in zip(group_labels, task_labels))


@dataclass(frozen=True)
class CandidatePair:
    """One node-group candidate for a task: its score and current feasibility."""

    group: int
    score: int
    feasible: bool


@dataclass(frozen=True)
class ScheduleDecision:
    """Audit record of one placement decision; node_id None means wait."""

    instance_id: str
    node_id: str | None
    group: int | None
    score: int | None
    rationale: str
    scheduler: str
    sim_time: float


class ClusterState:
    """Mutable runtime occupancy of the cluster (free resources per node)."""

    def __init__(self, nodes: Sequence[NodeSpec], active: Iterable[str] | None = None):
        self._nodes = {n.node_id: n for n in nodes}
        if active is None:
            active_ids = {n.node_id for n in nodes if n.enabled}
        else:
            active_ids = set(active)
        self.active: tuple[str, ...] = tuple(sorted(active_ids))
        self.free_cpus: dict[str, int] = {nid: self._nodes[nid].cpus for nid in self.active}
        self.free_mem: dict[str, float] = {nid: self._nodes[nid].mem_gb for nid in self.active}
        self.running: dict[str, set[str]] = {nid: set() for nid in self.active}

    def node(self, node_id: str) -> NodeSpec:
        return self._nodes[node_id]

    def fits(self, node_id: str, request: ResourceRequest) -> bool:
        return (
            node_id in self.free_cpus
            and self.free_cpus[node_id] >= request.cpus
            and self.free_mem[node_id] >= request.mem_gb
        )

    def load(self, node_id: str) -> float:
        cap = self._nodes[node_id].cpus
        return (cap - self.free_cpus[node_id]) / cap

    def assign(self, node_id: str, instance_id: str, request: ResourceRequest) -> None:
        if not self.fits(node_id, request):
            raise OvercommitError(
                f"node {node_id} cannot take {instance_id}: "
                f"free {self.free_cpus.get(node_id)} cpus / {self.free_mem.get(node_id)} GB, "
                f"requested {request.cpus} / {request.mem_gb}"
            )
        self.free_cpus[node_id] -= request.cpus
        self.free_mem[node_id] -= request.mem_gb
        self.running[node_id].add(instance_id)

    def release(self, node_id: str, instance_id: str, request: ResourceRequest) -> None:
        self.running[node_id].discard(instance_id)
        self.free_cpus[node_id] += request.cpus
        self.free_mem[node_id] += request.mem_gb
        node = self._nodes[node_id]
        if self.free_cpus[node_id] > node.cpus or self.free_mem[node_id] > node.mem_gb + 1e-9:
            raise ValidationError(f"release of {instance_id} overflowed node {node_id}")

    def feasible_nodes(self, request: ResourceRequest) -> list[str]:
        return [nid for nid in self.active if self.fits(nid, request)]


def _least_loaded(state: ClusterState, node_ids: Iterable[str]) -> str | None:
    candidates = [nid for nid in node_ids]
    if not candidates:
        return None
    return min(candidates, key=lambda nid: (state.load(nid), nid))


def score_groups(
    state: ClusterState, groups: NodeGroupSet, labels: TaskLabels, request: ResourceRequest
) -> list[CandidatePair]:
    """Score every group against the task and tag current feasibility."""
    if not groups.labeled:
        raise ValidationError("groups must be labeled before scoring")
    pairs = []
    for g in groups.groups:
        feasible = any(state.fits(nid, request) for nid in g.members)
        pairs.append(CandidatePair(group=g.index, score=score(g.labels.as_tuple(), labels.as_tuple()), feasible=feasible))
    return pairs


def tarema_pick(
    state: ClusterState,
    groups: NodeGroupSet,
    labels: TaskLabels,
    request: ResourceRequest,
    instance_id: str,
    sim_time: float = 0.0,
) -> ScheduleDecision:
    """Pick a node for one instance under the score-based policy.

    Known labels: minimal score among feasible groups, score ties broken by
    larger label power sum, then stable group index; within the group the
    least-loaded node (ties by node_id). Unknown labels: least-loaded feasible
    node cluster-wide. No feasible node anywhere is a "wait" decision.
    """
    if not labels.known:
        node_id = _least_loaded(state, state.feasible_nodes(request))
        group = None if node_id is None else groups.membership[node_id]
        return ScheduleDecision(
            instance_id=instance_id,
            node_id=node_id,
            group=group,
            score=None,
            rationale="unknown-least-load",
            scheduler="tarema",
            sim_time=sim_time,
        )

    pairs = score_groups(state, groups, labels, request)
    power = {g.index: g.labels.power for g in groups.groups}
    priority = sorted(pairs, key=lambda p: (p.score, -power[p.group], p.group))
    chosen = next((p for p in priority if p.feasible), None)
    if chosen is None:
        return ScheduleDecision(
            instance_id=instance_id,
            node_id=None,
            group=None,
            score=None,
            rationale="wait",
            scheduler="tarema",
            sim_time=sim_time,
        )
    members = groups.groups[chosen.group].members
    node_id = _least_loaded(state, (nid for nid in members if state.fits(nid, request)))
    if chosen is not priority[0]:
        rationale = "fallback-next-best"
    elif sum(1 for p in pairs if p.score == chosen.score) > 1:
        rationale = "tie-most-powerful"
    else:
        rationale = "preferred-group"
    return ScheduleDecision(
        instance_id=instance_id,
        node_id=node_id,
        group=chosen.group,
        score=chosen.score,
        rationale=rationale,
        scheduler="tarema",
        sim_time=sim_time,
    )


def round_robin_pick(
    state: ClusterState,
    node_list: Sequence[str],
    cursor: int,
    request: ResourceRequest,
    instance_id: str,
    sim_time: float = 0.0,
) -> tuple[ScheduleDecision, int]:
    """Next feasible node in a cyclic scan from the cursor; returns the new cursor.

    Skipped infeasible nodes stay in rotation; the cursor moves just past the
    chosen node (or stays put when nothing fits).
    """
    n = len(node_list)
    for off in range(n):
        pos = (cursor + off) % n
        nid = node_list[pos]
        if state.fits(nid, request):
            decision = ScheduleDecision(
                instance_id=instance_id, node_id=nid, group=None, score=None,
                rationale="rr", scheduler="rr", sim_time=sim_time,
            )
            return decision, (pos + 1) % n
    decision = ScheduleDecision(
        instance_id=instance_id, node_id=None, group=None, score=None,
        rationale="rr", scheduler="rr", sim_time=sim_time,
    )
    return decision, cursor


def fair_pick(
    state: ClusterState,
    request: ResourceRequest,
    instance_id: str,
    sim_time: float = 0.0,
) -> ScheduleDecision:
    """Feasible node with the smallest reserved-cpu fraction (ties by node_id)."""
    node_id = _least_loaded(state, state.feasible_nodes(request))
    return ScheduleDecision(
        instance_id=instance_id, node_id=node_id, group=None, score=None,
        rationale="fair", scheduler="fair", sim_time=sim_time,
    )


def fill_nodes_pick(
    state: ClusterState,
    node_list: Sequence[str],
    request: ResourceRequest,
    instance_id: str,
    sim_time: float = 0.0,
) -> ScheduleDecision:
    """First node in the list that still fits the request."""
    node_id = next((nid for nid in node_list if state.fits(nid, request)), None)
    return ScheduleDecision(
        instance_id=instance_id, node_id=node_id, group=None, score=None,
        rationale="fill", scheduler="fill", sim_time=sim_time,
    )


def sjfn_pick(
    state: ClusterState,
    groups: NodeGroupSet,
    request: ResourceRequest,
    instance_id: str,
    sim_time: float = 0.0,
) -> ScheduleDecision:
    """Feasible node of the most powerful group, falling back down the power order."""
    if not groups.labeled:
        raise ValidationError("groups must be labeled before SJFN can rank them")
    ordered = sorted(groups.groups, key=lambda g: (-g.labels.power, g.index))
    for g in ordered:
        node_id = _least_loaded(state, (nid for nid in g.members if state.fits(nid, request)))
        if node_id is not None:
            return ScheduleDecision(
                instance_id=instance_id, node_id=node_id, group=g.index, score=None,
                rationale="sjfn", scheduler="sjfn", sim_time=sim_time,
            )
    return ScheduleDecision(
        instance_id=instance_id, node_id=None, group=None, score=None,
        rationale="sjfn", scheduler="sjfn", sim_time=sim_time,
    )


def sjfn_order(
    queue: Sequence[TaskInstance], mean_runtime: Callable[[TaskInstance], float | None]
) -> list[TaskInstance]:
    """Stable sort of the ready queue by historic mean runtime, unknowns last."""
    def key(inst: TaskInstance) -> float:
        rt = mean_runtime(inst)
        return float("inf") if rt is None else rt

    return sorted(queue, key=key)


# ---------------------------------------------------------------------------
# Scheduler adapters used by the simulator event loop


@dataclass
class SchedContext:
    """Everything a scheduler may consult when deciding one placement."""

    state: ClusterState
    groups: NodeGroupSet
    store: TraceStore
    node_list: list[str]                           # shuffled per repetition
    time: float = 0.0
    workflow_of: Callable[[TaskInstance], str] = lambda inst: ""


class Scheduler:
    name = "base"
    uses_labels = False

    def on_repetition_start(self, node_list: list[str]) -> None:
        pass

    def order_queue(self, ctx: SchedContext, queue: list[TaskInstance]) -> list[TaskInstance]:
        return list(queue)

    def pick(
        self, ctx: SchedContext, instance: TaskInstance, request: ResourceRequest, labels: TaskLabels
    ) -> ScheduleDecision:
        raise NotImplementedError


class TaremaScheduler(Scheduler):
    name = "tarema"
    uses_labels = True

    def pick(self, ctx, instance, request, labels):
        return tarema_pick(ctx.state, ctx.groups, labels, request, instance.instance_id, ctx.time)


class RoundRobinScheduler(Scheduler):
    name = "rr"

    def __init__(self) -> None:
        self.cursor = 0

    def on_repetition_start(self, node_list: list[str]) -> None:
        self.cursor = 0

    def pick(self, ctx, instance, request, labels):
        decision, self.cursor = round_robin_pick(
            ctx.state, ctx.node_list, self.cursor, request, instance.instance_id, ctx.time
        )
        return decision


class FairScheduler(Scheduler):
    name = "fair"

    def pick(self, ctx, instance, request, labels):
        return fair_pick(ctx.state, request, instance.instance_id, ctx.time)


class FillNodesScheduler(Scheduler):
    name = "fill"

    def pick(self, ctx, instance, request, labels):
        return fill_nodes_pick(ctx.state, ctx.node_list, request, instance.instance_id, ctx.time)


class SjfnScheduler(Scheduler):
    name = "sjfn"

    def order_queue(self, ctx, queue):
        def mean_runtime(inst: TaskInstance) -> float | None:
            return ctx.store.mean_runtime(ctx.workflow_of(inst), inst.task_name)

        return sjfn_order(queue, mean_runtime)

    def pick(self, ctx, instance, request, labels):
        return sjfn_pick(ctx.state, ctx.groups, request, instance.instance_id, ctx.time)


_SCHEDULERS = {
    "tarema": TaremaScheduler,
    "rr": RoundRobinScheduler,
    "fair": FairScheduler,
    "fill": FillNodesScheduler,
    "sjfn": SjfnScheduler,
}


def make_scheduler(name: str) -> Scheduler:
    try:
        return _SCHEDULERS[name]()
    except KeyError:
        raise ValidationError(f"unknown scheduler {name!r}; choose from {SCHEDULER_NAMES}") from None


def write_audit_csv(decisions: Iterable[ScheduleDecision], path: str | Path) -> None:
    """Dump decisions to the audit CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AUDIT_CSV_HEADER)
        for d in decisions:
            writer.writerow(
                [
                    d.instance_id,
                    d.scheduler,
                    "" if d.group is None else d.group,
                    d.node_id if d.node_id is not None else "wait",
                    "" if d.score is None else d.score,
                    d.rationale,
                    d.sim_time,
                ]
            )
