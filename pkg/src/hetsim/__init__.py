"""hetsim: heterogeneous-cluster scheduling toolkit and workflow simulator."""

from .allocator import (
    CandidatePair,
    ClusterState,
    ScheduleDecision,
    fair_pick,
    fill_nodes_pick,
    make_scheduler,
    round_robin_pick,
    score,
    sjfn_pick,
    tarema_pick,
)
from .harness import ComparisonReport, ComparisonSpec, ScenarioEntry, compare
from .model import (
    BenchmarkVector,
    NodeSpec,
    ResourceRequest,
    TaskBehavior,
    TaskDef,
    TaskInstance,
    TaskTrace,
    WorkflowDag,
    load_cluster,
    load_workflow,
    save_cluster,
    save_workflow,
    validate_workflow,
)
from .monitor import PercentileBoundaries, TaskLabels, TraceStore, boundaries, label_task, record_trace
from .profiler import (
    FeatureMatrix,
    NodeGroupSet,
    cluster_nodes,
    normalize_features,
    profile_cluster,
    rank_and_label,
)
from .simulator import RunReport, SimScenario, effective_runtime, run, synthesize_workflow

__version__ = "0.1.0"

__all__ = [
    "BenchmarkVector", "CandidatePair", "ClusterState", "ComparisonReport", "ComparisonSpec",
    "FeatureMatrix", "NodeGroupSet", "NodeSpec", "PercentileBoundaries", "ResourceRequest",
    "RunReport", "ScenarioEntry", "ScheduleDecision", "SimScenario", "TaskBehavior", "TaskDef",
    "TaskInstance", "TaskLabels", "TaskTrace", "TraceStore", "WorkflowDag", "boundaries",
    "cluster_nodes", "compare", "effective_runtime", "fair_pick", "fill_nodes_pick", "label_task",
    "load_cluster", "load_workflow", "make_scheduler", "normalize_features", "profile_cluster",
    "rank_and_label", "record_trace", "round_robin_pick", "run", "save_cluster", "save_workflow",
    "score", "sjfn_pick", "synthesize_workflow", "tarema_pick", "validate_workflow",
]
