"""Domain types for clusters, workflow DAGs, task instances, and traces.

Everything except :class:`TaskInstance` is frozen after validation and safe
to share; instances carry the mutable runtime state of the simulator and
enforce their own state-transition order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import isfinite
from pathlib import Path


class ValidationError(ValueError):
    """A domain object violates one of its invariants."""


class CycleError(ValidationError):
    """A workflow graph contains a dependency cycle."""


@dataclass(frozen=True)
class BenchmarkVector:
    """Per-node microbenchmark measurements (CPU, memory, four IOPS figures)."""

    cpu_events_per_s: float
    ram_mib_per_s: float
    seq_read_iops: float
    seq_write_iops: float
    rnd_read_iops: float
    rnd_write_iops: float

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not (isinstance(value, (int, float)) and isfinite(value) and value > 0):
                raise ValidationError(f"benchmark field {name!r} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class NodeSpec:
    """A cluster machine: reservable capacity plus its benchmark profile."""

    node_id: str
    cpus: int
    mem_gb: float
    bench: BenchmarkVector
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.node_id:
            raise ValidationError("node_id must be non-empty")
        if self.cpus < 1:
            raise ValidationError(f"node {self.node_id}: cpus must be >= 1, got {self.cpus}")
        if not self.mem_gb > 0:
            raise ValidationError(f"node {self.node_id}: mem_gb must be > 0, got {self.mem_gb}")


@dataclass(frozen=True)
class ResourceRequest:
    """Reservation a task instance asks the resource manager for."""

    cpus: int
    mem_gb: float

    def __post_init__(self) -> None:
        if self.cpus < 1:
            raise ValidationError(f"request cpus must be >= 1, got {self.cpus}")
        if not self.mem_gb > 0:
            raise ValidationError(f"request mem_gb must be > 0, got {self.mem_gb}")


@dataclass(frozen=True)
class TaskBehavior:
    """Resource usage an instance exhibits while running.

    cpu_util_pct follows the process-monitor convention: 210 means two full
    cores plus 10% of a third one busy.
    """

    base_runtime_s: float
    cpu_util_pct: float
    mem_gb_used: float
    io_mb_per_s: float

    def __post_init__(self) -> None:
        if not self.base_runtime_s > 0:
            raise ValidationError(f"base_runtime_s must be > 0, got {self.base_runtime_s}")
        for name in ("cpu_util_pct", "mem_gb_used", "io_mb_per_s"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class TaskDef:
    """An abstract workflow task of which `instances` data-parallel copies run."""

    name: str
    instances: int
    request: ResourceRequest
    behavior: TaskBehavior

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("task name must be non-empty")
        if self.instances < 1:
            raise ValidationError(f"task {self.name}: instances must be >= 1, got {self.instances}")
        # usage cannot exceed reservation
        cap = 100.0 * self.request.cpus
        if self.behavior.cpu_util_pct > cap:
            raise ValidationError(
                f"task {self.name}: cpu_util_pct {self.behavior.cpu_util_pct} exceeds reservation cap {cap}"
            )


@dataclass(frozen=True)
class WorkflowDag:
    """A workflow: named tasks plus (predecessor, successor) dependency edges."""

    workflow_id: str
    tasks: tuple[TaskDef, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tasks]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"workflow {self.workflow_id}: duplicate task names {dupes}")

    @property
    def task_map(self) -> dict[str, TaskDef]:
        return {t.name: t for t in self.tasks}

    def predecessors(self, name: str) -> list[str]:
        return [a for a, b in self.edges if b == name]

    def successors(self, name: str) -> list[str]:
        return [b for a, b in self.edges if a == name]


def validate_workflow(dag: WorkflowDag) -> WorkflowDag:
    """Check edge endpoints resolve and the graph is acyclic.

    Returns the DAG unchanged on success so call sites can chain it.
    Raises :class:`ValidationError` naming the dangling endpoint, or
    :class:`CycleError` naming one edge on a cycle.
    """
    known = {t.name for t in dag.tasks}
    for a, b in dag.edges:
        for endpoint in (a, b):
            if endpoint not in known:
                raise ValidationError(
                    f"workflow {dag.workflow_id}: edge ({a}, {b}) references unknown task {endpoint!r}"
                )
    topological_order(dag)  # raises CycleError on a cycle
    return dag


def topological_order(dag: WorkflowDag) -> list[str]:
    """Kahn's algorithm; ties resolved by task-definition order for determinism."""
    order_index = {t.name: i for i, t in enumerate(dag.tasks)}
    indeg = {t.name: 0 for t in dag.tasks}
    for _, b in dag.edges:
        indeg[b] += 1
    ready = sorted((n for n, d in indeg.items() if d == 0), key=order_index.__getitem__)
    out: list[str] = []
    while ready:
        n = ready.pop(0)
        out.append(n)
        for m in dag.successors(n):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort(key=order_index.__getitem__)
    if len(out) < len(dag.tasks):
        remaining = {n for n in indeg if n not in set(out)}
        for a, b in dag.edges:
            if a in remaining and b in remaining:
                raise CycleError(f"workflow {dag.workflow_id}: cycle detected through edge ({a}, {b})")
        raise CycleError(f"workflow {dag.workflow_id}: cycle detected among {sorted(remaining)}")
    return out


_STATES = ("pending", "ready", "queued", "running", "done")


@dataclass
class TaskInstance:
    """One schedulable copy of a task; mutable simulator state.

    Transitions are restricted to pending -> ready -> queued -> running -> done
    and the timeline must stay monotone (submit <= start <= end).
    """

    instance_id: str
    task_name: str
    workflow_run_id: str
    state: str = "pending"
    assigned_node: str | None = None
    submit_time: float | None = None
    start_time: float | None = None
    end_time: float | None = None

    def _advance(self, new_state: str) -> None:
        if _STATES.index(new_state) != _STATES.index(self.state) + 1:
            raise ValidationError(f"instance {self.instance_id}: illegal transition {self.state} -> {new_state}")
        self.state = new_state

    def mark_ready(self, t: float) -> None:
        self._advance("ready")
        self.submit_time = t

    def mark_queued(self) -> None:
        self._advance("queued")

    def mark_running(self, t: float, node_id: str) -> None:
        self._advance("running")
        if self.submit_time is None or t < self.submit_time:
            raise ValidationError(f"instance {self.instance_id}: start {t} before submit {self.submit_time}")
        self.start_time = t
        self.assigned_node = node_id

    def mark_done(self, t: float) -> None:
        self._advance("done")
        if self.start_time is None or t < self.start_time:
            raise ValidationError(f"instance {self.instance_id}: end {t} before start {self.start_time}")
        self.end_time = t


@dataclass(frozen=True)
class TaskTrace:
    """One historic observation of a task instance's run."""

    task_name: str
    workflow_id: str
    runtime_s: float
    cpu_util_pct: float
    mem_gb_used: float
    io_mb_per_s: float
    node_id: str
    seq: int

    def __post_init__(self) -> None:
        if not self.runtime_s > 0:
            raise ValidationError(f"trace runtime_s must be > 0, got {self.runtime_s}")
        for name in ("cpu_util_pct", "mem_gb_used", "io_mb_per_s"):
            if getattr(self, name) < 0:
                raise ValidationError(f"trace {name} must be >= 0, got {getattr(self, name)}")


# ---------------------------------------------------------------------------
# file formats


def load_cluster(path: str | Path) -> list[NodeSpec]:
    """Read a cluster description file (JSON, top-level `nodes` list)."""
    data = json.loads(Path(path).read_text())
    nodes = []
    seen: set[str] = set()
    for entry in data["nodes"]:
        node = NodeSpec(
            node_id=entry["id"],
            cpus=int(entry["cpus"]),
            mem_gb=float(entry["mem_gb"]),
            bench=BenchmarkVector(**{k: float(v) for k, v in entry["bench"].items()}),
            enabled=bool(entry.get("enabled", True)),
        )
        if node.node_id in seen:
            raise ValidationError(f"duplicate node id {node.node_id!r} in {path}")
        seen.add(node.node_id)
        nodes.append(node)
    return nodes


def save_cluster(nodes: list[NodeSpec], path: str | Path) -> None:
    payload = {
        "nodes": [
            {
                "id": n.node_id,
                "cpus": n.cpus,
                "mem_gb": n.mem_gb,
                "enabled": n.enabled,
                "bench": asdict(n.bench),
            }
            for n in nodes
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_workflow(path: str | Path) -> WorkflowDag:
    """Read and validate a workflow description file (JSON)."""
    data = json.loads(Path(path).read_text())
    tasks = tuple(
        TaskDef(
            name=t["name"],
            instances=int(t["instances"]),
            request=ResourceRequest(cpus=int(t["cpus"]), mem_gb=float(t["mem_gb"])),
            behavior=TaskBehavior(
                base_runtime_s=float(t["base_runtime_s"]),
                cpu_util_pct=float(t["cpu_util_pct"]),
                mem_gb_used=float(t["mem_gb_used"]),
                io_mb_per_s=float(t["io_mb_per_s"]),
            ),
        )
        for t in data["tasks"]
    )
    edges = tuple((str(a), str(b)) for a, b in data.get("edges", []))
    return validate_workflow(WorkflowDag(workflow_id=data["workflow_id"], tasks=tasks, edges=edges))


def save_workflow(dag: WorkflowDag, path: str | Path) -> None:
    payload = {
        "workflow_id": dag.workflow_id,
        "tasks": [
            {
                "name": t.name,
                "instances": t.instances,
                "cpus": t.request.cpus,
                "mem_gb": t.request.mem_gb,
                "base_runtime_s": t.behavior.base_runtime_s,
                "cpu_util_pct": t.behavior.cpu_util_pct,
                "mem_gb_used": t.behavior.mem_gb_used,
                "io_mb_per_s": t.behavior.io_mb_per_s,
            }
            for t in dag.tasks
        ],
        "edges": [[a, b] for a, b in dag.edges],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
