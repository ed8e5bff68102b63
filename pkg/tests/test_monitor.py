import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetsim.model import TaskTrace
from hetsim.monitor import (
    NoTraceDataError,
    PercentileBoundaries,
    TaskLabels,
    TraceStore,
    boundaries,
    group_capacity,
    label_task,
    percentile_fractions,
    record_trace,
)
from hetsim.profiler import GroupLabels, NodeGroup, NodeGroupSet


def trace(task="align", wf="wfA", runtime=10.0, cpu=100.0, mem=1.0, io=5.0, node="n0", seq=0):
    return TaskTrace(task_name=task, workflow_id=wf, runtime_s=runtime,
                     cpu_util_pct=cpu, mem_gb_used=mem, io_mb_per_s=io, node_id=node, seq=seq)


def make_groups(cpu_caps, mem_caps=None, node_counts=None):
    """Labeled groups, weakest first, with prescribed capacities."""
    k = len(cpu_caps)
    mem_caps = mem_caps or [c * 4.0 for c in cpu_caps]
    node_counts = node_counts or [max(1, c // 8) for c in cpu_caps]
    groups = tuple(
        NodeGroup(
            index=i,
            members=tuple(f"g{i}n{j}" for j in range(node_counts[i])),
            total_cpus=cpu_caps[i],
            total_mem_gb=mem_caps[i],
            feature_means={},
            basis_means={"cpu": float(i + 1), "mem": float(i + 1), "io": float(i + 1)},
            labels=GroupLabels(cpu=i + 1, mem=i + 1, io=i + 1),
        )
        for i in range(k)
    )
    membership = {m: g.index for g in groups for m in g.members}
    return NodeGroupSet(groups=groups, membership=membership, silhouette_by_k={}, chosen_k=k)


class TestTraceStore:
    def test_first_trace_aggregate(self):
        store = TraceStore()
        record_trace(store, trace(runtime=12.5, cpu=150.0, mem=2.0, io=7.0))
        means = store.task_means("wfA", "align")
        assert store.task_count("wfA", "align") == 1
        assert means == {"runtime_s": 12.5, "cpu_util_pct": 150.0, "mem_gb_used": 2.0, "io_mb_per_s": 7.0}

    def test_two_trace_mean(self):
        store = TraceStore()
        store.record(trace(cpu=100.0, seq=0))
        store.record(trace(cpu=300.0, seq=1))
        assert store.task_means("wfA", "align")["cpu_util_pct"] == pytest.approx(200.0)

    def test_thousand_random_traces_match_recomputation(self):
        rng = np.random.default_rng(3)
        store = TraceStore()
        raw = []
        for i in range(1000):
            wf = f"wf{rng.integers(3)}"
            task = f"t{rng.integers(5)}"
            t = trace(task=task, wf=wf, runtime=float(rng.uniform(0.1, 100)),
                      cpu=float(rng.uniform(0, 400)), mem=float(rng.uniform(0, 16)),
                      io=float(rng.uniform(0, 200)), seq=i)
            raw.append(t)
            store.record(t)
        # brute-force oracle: recompute every aggregate from the raw list
        for wf in {t.workflow_id for t in raw}:
            for task in {t.task_name for t in raw if t.workflow_id == wf}:
                mine = [t for t in raw if t.workflow_id == wf and t.task_name == task]
                means = store.task_means(wf, task)
                assert store.task_count(wf, task) == len(mine)
                assert means["runtime_s"] == pytest.approx(sum(t.runtime_s for t in mine) / len(mine))
                assert means["cpu_util_pct"] == pytest.approx(sum(t.cpu_util_pct for t in mine) / len(mine))
                assert means["mem_gb_used"] == pytest.approx(sum(t.mem_gb_used for t in mine) / len(mine))
                assert means["io_mb_per_s"] == pytest.approx(sum(t.io_mb_per_s for t in mine) / len(mine))

    def test_workflow_level_aggregate(self):
        store = TraceStore()
        store.record(trace(task="a", cpu=100.0, seq=0))
        store.record(trace(task="b", cpu=300.0, seq=1))
        assert store.workflow_means("wfA")["cpu_util_pct"] == pytest.approx(200.0)
        assert store.workflow_means("nope") is None

    def test_append_does_not_mutate_existing(self):
        store = TraceStore()
        first = trace(seq=0)
        store.record(first)
        snapshot = store.traces
        store.record(trace(cpu=999.0, seq=1))
        assert snapshot[0] is first
        assert store.traces[0] == first

    def test_persistence_round_trip(self, tmp_path):
        store = TraceStore()
        rng = np.random.default_rng(5)
        for i in range(50):
            store.observe(task_name=f"t{rng.integers(4)}", workflow_id="wfZ",
                          runtime_s=float(rng.uniform(1, 50)), cpu_util_pct=float(rng.uniform(0, 200)),
                          mem_gb_used=float(rng.uniform(0, 8)), io_mb_per_s=float(rng.uniform(0, 90)),
                          node_id=f"n{rng.integers(3)}")
        path = tmp_path / "traces.csv"
        store.save(path)
        loaded = TraceStore.load(path)
        assert loaded.traces == store.traces
        groups = make_groups([40, 40, 40])
        for task in store.task_names("wfZ"):
            assert label_task(loaded, groups, "wfZ", task) == label_task(store, groups, "wfZ", task)


class TestPercentileFractions:
    def test_equal_capacities_give_thirds(self):
        # three groups of 40 cores each
        p = percentile_fractions([40.0, 40.0, 40.0])
        assert p[0] == 0.0
        assert p[-1] == 1.0
        assert p[1] == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert p[2] == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_single_group_is_degenerate(self):
        assert percentile_fractions([64.0]) == (0.0, 1.0)

    @given(st.lists(st.floats(min_value=0.5, max_value=1e6), min_size=1, max_size=10))
    @settings(max_examples=300, deadline=None)
    def test_fraction_law(self, caps):
        p = percentile_fractions(caps)
        total = sum(caps)
        assert p[0] == 0.0 and p[-1] == 1.0
        assert all(a <= b for a, b in zip(p, p[1:]))
        for i, c in enumerate(caps):
            assert p[i + 1] - p[i] == pytest.approx(c / total, abs=1e-12)


class TestBoundaries:
    def test_equal_core_groups_of_real_profile_give_thirds(self):
        # the uniform 15-node shape groups into 3x5 nodes of 8 cores each,
        # so the cpu capacity fractions are exactly (0, 1/3, 2/3, 1)
        from hetsim.clusters import demo_cluster
        from hetsim.profiler import profile_cluster

        groups = profile_cluster(demo_cluster("5;5;5", seed=0), seed=0)
        assert [g.total_cpus for g in groups.groups] == [40, 40, 40]
        store = TraceStore()
        for i in range(6):
            store.record(trace(task=f"t{i}", cpu=float(20 * (i + 1)), seq=i))
        b = boundaries(groups, store, "wfA", "cpu")
        assert b.fractions[0] == 0.0 and b.fractions[-1] == 1.0
        assert b.fractions[1] == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert b.fractions[2] == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_cuts_from_chosen_sample_land_on_54_112(self):
        # equal capacities and usage values {54, 112, 200}: the 1/3 and 2/3
        # lower-nearest-rank quantiles are exactly the example cuts
        groups = make_groups([40, 40, 40])
        store = TraceStore()
        for i, cpu in enumerate([54.0, 112.0, 200.0]):
            store.record(trace(task=f"t{i}", wf="wfA", cpu=cpu, seq=i))
        b = boundaries(groups, store, "wfA", "cpu")
        assert b.cuts == (54.0, 112.0)
        assert b.intervals() == [(0.0, 54.0), (54.0, 112.0), (112.0, math.inf)]

    def test_single_group_single_interval(self):
        groups = make_groups([40])
        store = TraceStore()
        store.record(trace())
        b = boundaries(groups, store, "wfA", "cpu")
        assert b.fractions == (0.0, 1.0)
        assert b.cuts == ()
        assert b.intervals() == [(0.0, math.inf)]
        assert b.interval_index(0.0) == 1
        assert b.interval_index(1e9) == 1

    def test_empty_store_raises(self):
        groups = make_groups([40, 40])
        with pytest.raises(NoTraceDataError):
            boundaries(groups, TraceStore(), "wfA", "cpu")

    def test_group_order_follows_labels_not_indices(self):
        # swap labels so group 1 is weakest; capacity order must follow labels
        from dataclasses import replace

        groups = make_groups([10, 30])
        flipped = NodeGroupSet(
            groups=(
                replace(groups.groups[0], labels=GroupLabels(2, 2, 2)),
                replace(groups.groups[1], labels=GroupLabels(1, 1, 1)),
            ),
            membership=groups.membership,
            silhouette_by_k={},
            chosen_k=2,
        )
        store = TraceStore()
        for i, cpu in enumerate([10.0, 20.0, 30.0, 40.0]):
            store.record(trace(task=f"t{i}", cpu=cpu, seq=i))
        b = boundaries(flipped, store, "wfA", "cpu")
        assert b.group_order == (1, 0)
        # weakest-first capacities are (30, 10): p1 = 0.75 -> cut at sample[2]
        assert b.fractions[1] == pytest.approx(0.75)
        assert b.cuts == (30.0,)

    def test_capacity_measures(self):
        g = make_groups([40], mem_caps=[160.0], node_counts=[5]).groups[0]
        assert group_capacity(g, "cpu") == 40.0
        assert group_capacity(g, "mem") == 160.0
        assert group_capacity(g, "io") == 5.0

    @given(
        st.lists(st.floats(min_value=0.0, max_value=500.0), min_size=1, max_size=40),
        st.lists(st.integers(min_value=8, max_value=64), min_size=1, max_size=5),
    )
    @settings(max_examples=200, deadline=None)
    def test_interval_completeness(self, usages, caps):
        groups = make_groups(caps)
        store = TraceStore()
        for i, u in enumerate(usages):
            store.record(trace(task=f"t{i}", cpu=u, seq=i))
        b = boundaries(groups, store, "wfA", "cpu")
        probes = set(usages) | {0.0, 1e12}
        for cut in b.cuts:
            probes |= {cut, max(0.0, cut - 1e-9), cut + 1e-9}
        for value in probes:
            idx = b.interval_index(value)
            hits = [
                1 for lo, hi in b.intervals()
                if lo <= value < hi
            ]
            assert sum(hits) == 1
            lo, hi = b.intervals()[idx - 1]
            assert lo <= value < hi


class TestLabelTask:
    def test_usage_210_with_example_cuts_labels_3(self):
        b = PercentileBoundaries(feature="cpu", fractions=(0.0, 1 / 3, 2 / 3, 1.0),
                                 cuts=(54.0, 112.0), group_order=(0, 1, 2))
        assert b.interval_index(210.0) == 3
        assert b.interval_index(54.0) == 2       # at a cut: upper interval
        assert b.interval_index(53.999) == 1

    def test_cold_start_is_unknown(self):
        groups = make_groups([40, 40, 40])
        store = TraceStore()
        labels = label_task(store, groups, "wfA", "never-seen")
        assert labels == TaskLabels.unknown()
        assert not labels.known

    def test_task_with_history_gets_interval_ranks(self):
        groups = make_groups([40, 40, 40])
        store = TraceStore()
        # nine traces spread so each feature has clear thirds
        for i in range(9):
            store.record(trace(task=f"t{i % 3}", cpu=float(10 + i * 40), mem=float(i), io=float(i * 10), seq=i))
        labels = label_task(store, groups, "wfA", "t0")
        assert labels.known
        for feature, value in (("cpu", labels.cpu), ("mem", labels.mem), ("io", labels.io)):
            assert 1 <= value <= 3

    def test_labels_all_or_nothing(self):
        groups = make_groups([40, 40, 40])
        store = TraceStore()
        store.record(trace(task="warm", seq=0))
        assert label_task(store, groups, "wfA", "warm").known
        assert not label_task(store, groups, "wfA", "cold").known

    def test_monotone_in_usage(self):
        groups = make_groups([40, 40, 40])
        store = TraceStore()
        rng = np.random.default_rng(2)
        for i in range(30):
            store.record(trace(task=f"bg{i}", cpu=float(rng.uniform(0, 300)), seq=i))
        b = boundaries(groups, store, "wfA", "cpu")
        previous = 0
        for usage in np.linspace(0.0, 400.0, 100):
            idx = b.interval_index(float(usage))
            assert idx >= previous
            previous = idx

    def test_cross_workflow_flag_widens_the_sample(self):
        groups = make_groups([40, 40])
        store = TraceStore()
        store.record(trace(task="a", wf="wfA", cpu=10.0, seq=0))
        store.record(trace(task="b", wf="wfA", cpu=20.0, seq=1))
        store.record(trace(task="c", wf="wfB", cpu=1000.0, seq=2))
        scoped = boundaries(groups, store, "wfA", "cpu")
        shared = boundaries(groups, store, "wfA", "cpu", cross_workflow=True)
        assert scoped.cuts == (10.0,)    # median of {10, 20}, lower nearest rank
        assert shared.cuts == (20.0,)    # median of {10, 20, 1000}
