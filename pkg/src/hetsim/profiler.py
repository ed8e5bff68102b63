"""Phase 1: group nodes by benchmark similarity and rank-label the groups.

Nodes are clustered on z-scored benchmark features with k-means++ (a fixed
number of restarts per candidate k, best inertia kept); the group count is
chosen by maximal mean silhouette. Each group then gets one scalar label per
feature dimension (cpu, mem, io), a dense rank 1..n where weaker performance
means a lower rank and near-equal group means share a label.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .model import NodeSpec, ValidationError

# Feature columns used for clustering. Sequential and random IOPS pairs are
# each averaged into one column so read/write asymmetry does not double-count.
DEFAULT_FEATURES = ("cpu", "mem", "seq_io", "rnd_io")

_EXTRACTORS = {
    "cpu": lambda b: b.cpu_events_per_s,
    "mem": lambda b: b.ram_mib_per_s,
    "seq_io": lambda b: (b.seq_read_iops + b.seq_write_iops) / 2.0,
    "rnd_io": lambda b: (b.rnd_read_iops + b.rnd_write_iops) / 2.0,
}

# Label dimensions and the feature columns each one averages over.
LABEL_BASIS = {"cpu": ("cpu",), "mem": ("mem",), "io": ("seq_io", "rnd_io")}

TIE_REL_TOL = 0.02      # group means within 2% of the class anchor share a label
SILHOUETTE_FLOOR = 0.25  # below this for every k, fall back to a single group
KMEANS_RESTARTS = 10
# Columns whose spread is below this fraction of their mean carry measurement
# jitter, not signal; scaling them to unit variance would let noise dominate
# the distance metric, so they are flagged constant and zeroed instead.
CONSTANT_CV = 0.01


class ProfilingError(ValidationError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """z-scored benchmark features, one row per enabled node.

    Rows are sorted by node_id so clustering is invariant to input order.
    Normalization parameters are kept for reporting; constant columns are
    flagged and map to all-zero z-scores.
    """

    node_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray   # z-scores, shape (n_nodes, n_columns); constant columns all zero
    raw: np.ndarray      # original feature values, same shape
    means: np.ndarray
    stds: np.ndarray     # recorded as measured, even for flagged-constant columns
    constant: tuple[bool, ...]

    def __eq__(self, other: object) -> bool:  # ndarray fields break dataclass eq
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.node_ids == other.node_ids
            and self.columns == other.columns
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.raw, other.raw)
        )


@dataclass(frozen=True)
class GroupLabels:
    """Scalar rank labels 1..n for one node group."""

    cpu: int
    mem: int
    io: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.cpu, self.mem, self.io)

    @property
    def power(self) -> int:
        return self.cpu + self.mem + self.io

    def __str__(self) -> str:
        return f"cpu={self.cpu} mem={self.mem} io={self.io}"


@dataclass(frozen=True)
class NodeGroup:
    index: int
    members: tuple[str, ...]
    total_cpus: int
    total_mem_gb: float
    feature_means: dict[str, float]   # per clustering column, raw units
    basis_means: dict[str, float]     # per label dimension (cpu, mem, io)
    labels: GroupLabels | None = None


@dataclass(frozen=True)
class NodeGroupSet:
    """Clustering output: memberships, capacity aggregates, and rank labels."""

    groups: tuple[NodeGroup, ...]
    membership: dict[str, int]          # node_id -> group index
    silhouette_by_k: dict[int, float]
    chosen_k: int
    fallback: bool = False              # True when the single-group fallback fired

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def labeled(self) -> bool:
        return all(g.labels is not None for g in self.groups)

    def group_of(self, node_id: str) -> NodeGroup:
        return self.groups[self.membership[node_id]]


def normalize_features(
    nodes: Sequence[NodeSpec], features: Sequence[str] = DEFAULT_FEATURES
) -> FeatureMatrix:
    """Build the z-scored feature matrix over the enabled nodes.

    Population standard deviation is used, so two nodes give exactly +-1 in
    every varying column. Raises when fewer than two nodes are enabled.
    """
    if not features:
        raise ProfilingError("feature selection must name at least one column")
    enabled = sorted((n for n in nodes if n.enabled), key=lambda n: n.node_id)
    if len(enabled) < 2:
        raise ProfilingError(f"profiling needs >= 2 enabled nodes, got {len(enabled)}")
    raw = np.array([[_EXTRACTORS[f](n.bench) for f in features] for n in enabled], dtype=float)
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)
    constant = tuple(bool(s <= CONSTANT_CV * abs(m)) for s, m in zip(stds, means))
    flat = np.array(constant)
    safe = np.where(flat, 1.0, np.where(stds == 0.0, 1.0, stds))
    values = np.where(flat, 0.0, (raw - means) / safe)
    return FeatureMatrix(
        node_ids=tuple(n.node_id for n in enabled),
        columns=tuple(features),
        values=values,
        raw=raw,
        means=means,
        stds=stds,
        constant=constant,
    )


# ---------------------------------------------------------------------------
# k-means++ / silhouette internals


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One seeded k-means++ run; returns (assignment, inertia).

    Inertia is +inf when the run collapses to fewer than k nonempty clusters
    (possible with duplicate-heavy inputs), so callers can discard it.
    """
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = points[rng.integers(n)]
        else:
            centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=int)
    for _ in range(100):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        for j in range(k):
            mask = new_assign == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
        if (new_assign == assign).all():
            break
        assign = new_assign

    if len(np.unique(assign)) < k:
        return assign, float("inf")
    inertia = float(((points - centers[assign]) ** 2).sum())
    return assign, inertia


def mean_silhouette(points: np.ndarray, assign: np.ndarray) -> float:
    """Mean silhouette over all points; singleton and zero-distance cases score 0."""
    n = len(points)
    labels = np.unique(assign)
    if len(labels) < 2:
        return 0.0
    dists = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(n)
    for i in range(n):
        own = assign[i]
        own_mask = assign == own
        if own_mask.sum() == 1:
            continue  # singleton cluster: s = 0
        a = dists[i][own_mask & (np.arange(n) != i)].mean()
        b = min(dists[i][assign == other].mean() for other in labels if other != own)
        denom = max(a, b)
        if denom > 0.0:
            scores[i] = (b - a) / denom
    return float(scores.mean())


def cluster_nodes(
    matrix: FeatureMatrix,
    k_range: Iterable[int],
    seed: int,
    restarts: int = KMEANS_RESTARTS,
    silhouette_floor: float = SILHOUETTE_FLOOR,
) -> NodeGroupSet:
    """Cluster the feature matrix, choosing k by maximal mean silhouette.

    Deterministic given the seed: every (k, restart) pair gets its own RNG
    stream and ties prefer the lower restart index / smaller k. Falls back to
    a single group (fallback flag set) when every candidate k is degenerate or
    scores below the silhouette floor.
    """
    ks = sorted(set(int(k) for k in k_range))
    n = len(matrix.node_ids)
    if not ks:
        raise ProfilingError("k_range is empty")
    for k in ks:
        if not 2 <= k <= n - 1:
            raise ProfilingError(f"k={k} outside the valid range [2, {n - 1}]")

    best_by_k: dict[int, np.ndarray] = {}
    silhouette_by_k: dict[int, float] = {}
    for k in ks:
        best_assign, best_inertia = None, float("inf")
        for restart in range(restarts):
            rng = np.random.default_rng([seed, k, restart])
            assign, inertia = _kmeans_once(matrix.values, k, rng)
            if inertia < best_inertia:
                best_assign, best_inertia = assign, inertia
        if best_assign is None:
            continue  # every restart collapsed; k not achievable on this data
        best_by_k[k] = best_assign
        silhouette_by_k[k] = mean_silhouette(matrix.values, best_assign)

    if not best_by_k or max(silhouette_by_k.values()) < silhouette_floor:
        assign = np.zeros(n, dtype=int)
        return _build_groupset(matrix, assign, silhouette_by_k, chosen_k=1, fallback=True)

    chosen_k = max(silhouette_by_k, key=lambda k: (silhouette_by_k[k], -k))
    return _build_groupset(matrix, best_by_k[chosen_k], silhouette_by_k, chosen_k=chosen_k)


def _build_groupset(
    matrix: FeatureMatrix,
    assign: np.ndarray,
    silhouette_by_k: dict[int, float],
    chosen_k: int,
    fallback: bool = False,
) -> NodeGroupSet:
    col = {c: i for i, c in enumerate(matrix.columns)}
    raw_groups = []
    for g in np.unique(assign):
        mask = assign == g
        members = tuple(nid for nid, m in zip(matrix.node_ids, mask) if m)
        feature_means = {c: float(matrix.raw[mask, col[c]].mean()) for c in matrix.columns}
        raw_groups.append((members, feature_means))
    # Canonical group order: ascending cpu mean, then mem, then first member id.
    raw_groups.sort(key=lambda g: (g[1].get("cpu", 0.0), g[1].get("mem", 0.0), g[0][0]))

    groups = []
    membership: dict[str, int] = {}
    for index, (members, feature_means) in enumerate(raw_groups):
        basis_means = {
            dim: float(np.mean([feature_means[c] for c in cols if c in feature_means]))
            for dim, cols in LABEL_BASIS.items()
        }
        groups.append(
            NodeGroup(
                index=index,
                members=members,
                total_cpus=0,
                total_mem_gb=0.0,
                feature_means=feature_means,
                basis_means=basis_means,
            )
        )
        for nid in members:
            membership[nid] = index
    return NodeGroupSet(
        groups=tuple(groups),
        membership=membership,
        silhouette_by_k=dict(sorted(silhouette_by_k.items())),
        chosen_k=chosen_k,
        fallback=fallback,
    )


def attach_capacities(groups: NodeGroupSet, nodes: Sequence[NodeSpec]) -> NodeGroupSet:
    """Fill per-group capacity aggregates (total cores, total memory)."""
    by_id = {n.node_id: n for n in nodes}
    updated = tuple(
        replace(
            g,
            total_cpus=sum(by_id[m].cpus for m in g.members),
            total_mem_gb=float(sum(by_id[m].mem_gb for m in g.members)),
        )
        for g in groups.groups
    )
    return replace(groups, groups=updated)


def rank_and_label(groups: NodeGroupSet, tie_rel_tol: float = TIE_REL_TOL) -> NodeGroupSet:
    """Assign dense rank labels 1..n per label dimension, weakest group lowest.

    Groups whose means sit within `tie_rel_tol` (relative to the first mean of
    the current label class) share a label; the label set always covers
    1..max without holes.
    """
    per_dim_labels: dict[str, dict[int, int]] = {}
    for dim in LABEL_BASIS:
        order = sorted(groups.groups, key=lambda g: (g.basis_means[dim], g.index))
        labels: dict[int, int] = {}
        label, anchor = 0, None
        for g in order:
            mean = g.basis_means[dim]
            if anchor is None or mean > anchor * (1.0 + tie_rel_tol):
                label += 1
                anchor = mean
            labels[g.index] = label
        per_dim_labels[dim] = labels

    updated = tuple(
        replace(
            g,
            labels=GroupLabels(
                cpu=per_dim_labels["cpu"][g.index],
                mem=per_dim_labels["mem"][g.index],
                io=per_dim_labels["io"][g.index],
            ),
        )
        for g in groups.groups
    )
    return replace(groups, groups=updated)


def profile_cluster(
    nodes: Sequence[NodeSpec],
    k_range: Iterable[int] | None = None,
    seed: int = 0,
    features: Sequence[str] = DEFAULT_FEATURES,
) -> NodeGroupSet:
    """Run the full phase-1 pipeline: normalize, cluster, rank, label.

    With the default k_range [2, min(6, n-1)]; clusters of fewer than three
    nodes skip clustering and come back as one labeled group.
    """
    enabled = sorted((n for n in nodes if n.enabled), key=lambda n: n.node_id)
    if not enabled:
        raise ProfilingError("cluster has no enabled nodes")
    if len(enabled) == 1:
        only = enabled[0]
        matrix = FeatureMatrix(
            node_ids=(only.node_id,),
            columns=tuple(features),
            values=np.zeros((1, len(features))),
            raw=np.array([[_EXTRACTORS[f](only.bench) for f in features]]),
            means=np.array([_EXTRACTORS[f](only.bench) for f in features]),
            stds=np.zeros(len(features)),
            constant=tuple(True for _ in features),
        )
        grouped = _build_groupset(matrix, np.zeros(1, dtype=int), {}, chosen_k=1)
    else:
        matrix = normalize_features(nodes, features)
        if k_range is None:
            upper = min(6, len(enabled) - 1)
            k_range = range(2, upper + 1)
        ks = list(k_range)
        if ks:
            grouped = cluster_nodes(matrix, ks, seed=seed)
        else:
            grouped = _build_groupset(matrix, np.zeros(len(enabled), dtype=int), {}, chosen_k=1, fallback=True)
    grouped = attach_capacities(grouped, enabled)
    return rank_and_label(grouped)


def group_report(groups: NodeGroupSet, matrix: FeatureMatrix | None = None) -> dict:
    """JSON-ready summary of a grouping (the `profile` subcommand output)."""
    report: dict = {
        "k": groups.k,
        "chosen_k": groups.chosen_k,
        "fallback": groups.fallback,
        "silhouette_by_k": {str(k): v for k, v in groups.silhouette_by_k.items()},
        "groups": [
            {
                "index": g.index,
                "members": list(g.members),
                "total_cpus": g.total_cpus,
                "total_mem_gb": g.total_mem_gb,
                "feature_means": g.feature_means,
                "labels": None if g.labels is None else {"cpu": g.labels.cpu, "mem": g.labels.mem, "io": g.labels.io},
            }
            for g in groups.groups
        ],
    }
    if matrix is not None:
        report["normalization"] = {
            c: {"mean": float(matrix.means[i]), "std": float(matrix.stds[i]), "constant": matrix.constant[i]}
            for i, c in enumerate(matrix.columns)
        }
    return report
