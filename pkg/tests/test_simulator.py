import pytest

from hetsim.clusters import demo_cluster
from hetsim.model import (
    BenchmarkVector,
    NodeSpec,
    ResourceRequest,
    TaskBehavior,
    TaskDef,
    ValidationError,
    WorkflowDag,
)
from hetsim.monitor import TraceStore
from hetsim.profiler import profile_cluster
from hetsim.simulator import (
    EventQueue,
    SimScenario,
    SimulationDeadlock,
    effective_runtime,
    restricted_active_set,
    run,
    synthesize_workflow,
    write_report_csv,
)


def bench(cpu=525.0):
    return BenchmarkVector(cpu_events_per_s=cpu, ram_mib_per_s=19800.0,
                           seq_read_iops=481.0, seq_write_iops=483.0,
                           rnd_read_iops=102.0, rnd_write_iops=107.0)


def node(nid="n0", cpu=525.0, cpus=8, mem=32.0):
    return NodeSpec(node_id=nid, cpus=cpus, mem_gb=mem, bench=bench(cpu))


def task(name, instances=1, base=10.0, util=100.0, cpus=2, mem=5.0):
    return TaskDef(name=name, instances=instances,
                   request=ResourceRequest(cpus=cpus, mem_gb=mem),
                   behavior=TaskBehavior(base_runtime_s=base, cpu_util_pct=util,
                                         mem_gb_used=1.0, io_mb_per_s=5.0))


def single_task_workflow(base=10.0):
    return WorkflowDag(workflow_id="one", tasks=(task("only", base=base),), edges=())


class TestEffectiveRuntime:
    def test_reference_node_is_identity(self):
        b = task("t", base=100.0).behavior
        assert effective_runtime(b, node(cpu=525.0), 525.0, 100.0, alpha=0.0) == pytest.approx(100.0)

    def test_slow_node_scales_by_speed_ratio(self):
        # 100 s of reference work on a 367-events/s node with a 525 reference
        b = task("t", base=100.0).behavior
        want = 100.0 * 525.0 / 367.0  # = 143.0517... by hand
        got = effective_runtime(b, node(cpu=367.0), 525.0, 100.0, alpha=0.0)
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(143.05, abs=0.01)

    def test_interference_multiplier(self):
        # 12 cores of utilization on an 8-core node: (12-8)/8 = 0.5 oversubscribed
        b = task("t", base=100.0).behavior
        got = effective_runtime(b, node(cpus=8), 525.0, 1200.0, alpha=0.5)
        assert got == pytest.approx(100.0 * 1.25, rel=1e-12)

    def test_no_oversubscription_means_no_penalty(self):
        b = task("t", base=100.0).behavior
        assert effective_runtime(b, node(cpus=8), 525.0, 800.0, alpha=0.5) == pytest.approx(100.0)


class TestEventQueue:
    def test_orders_by_time_then_sequence(self):
        q = EventQueue()
        q.push(2.0, "b", None)
        q.push(1.0, "a", None)
        q.push(1.0, "c", None)
        t, batch = q.pop_time_batch()
        assert t == 1.0
        assert [kind for kind, _ in batch] == ["a", "c"]  # insertion order at same time
        t, batch = q.pop_time_batch()
        assert t == 2.0 and len(batch) == 1


class TestRun:
    def test_single_task_single_node(self):
        scn = SimScenario(nodes=(node(),), workflows=((single_task_workflow(base=42.0), 0.0),),
                          scheduler="tarema", seed=0, alpha=0.0)
        report = run(scn, TraceStore())
        assert report.rows[0].makespan == pytest.approx(42.0)
        assert report.rows[0].instances == 1

    def test_critical_path_on_one_big_node(self):
        # A -> B(x2) -> C -> {D, E} -> F on a node wide enough for everything:
        # makespan must equal A + B + C + max(D, E) + F
        tasks = (
            task("A", base=10.0), task("B", instances=2, base=20.0), task("C", base=5.0),
            task("D", base=7.0), task("E", base=11.0), task("F", base=3.0),
        )
        edges = (("A", "B"), ("B", "C"), ("C", "D"), ("C", "E"), ("D", "F"), ("E", "F"))
        dag = WorkflowDag(workflow_id="fig", tasks=tasks, edges=edges)
        big = node(cpus=512, mem=4096.0)
        scn = SimScenario(nodes=(big,), workflows=((dag, 0.0),), scheduler="fair", seed=0, alpha=0.0)
        report = run(scn, TraceStore())
        assert report.rows[0].makespan == pytest.approx(10.0 + 20.0 + 5.0 + 11.0 + 3.0)
        assert report.rows[0].instances == 7

    def test_same_seed_is_bit_identical(self):
        nodes = tuple(demo_cluster("5;5;5", seed=2))
        wf = synthesize_workflow("mixed", 8, seed=4)
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="tarema",
                          seed=11, repetitions=3, warm_start=True)
        assert run(scn, TraceStore()) == run(scn, TraceStore())

    def test_dag_order_is_respected(self):
        nodes = tuple(demo_cluster("5;5;5", seed=0))
        wf = synthesize_workflow("mixed", 6, seed=1)
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="rr", seed=3)
        report = run(scn, TraceStore())
        records = report.rows[0].records
        ends = {}
        for r in records:
            ends.setdefault((r.workflow_run_id, r.task_name), []).append(r.end_time)
        preds = {t.name: wf.predecessors(t.name) for t in wf.tasks}
        for r in records:
            for p in preds[r.task_name]:
                assert r.start_time >= max(ends[(r.workflow_run_id, p)])

    def test_resource_conservation_over_time(self):
        nodes = tuple(demo_cluster("5;4;4;2", seed=0))
        wf = synthesize_workflow("cpu_heavy", 8, seed=2)
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="fill", seed=5)
        report = run(scn, TraceStore())
        by_node = {n.node_id: n for n in nodes}
        request_cpus = {t.name: t.request.cpus for t in wf.tasks}
        events = []
        for r in report.rows[0].records:
            events.append((r.start_time, 1, r.node_id, request_cpus[r.task_name]))
            events.append((r.end_time, 0, r.node_id, -request_cpus[r.task_name]))
        used = {nid: 0 for nid in by_node}
        for _, _, nid, delta in sorted(events):  # releases sort before starts at equal time
            used[nid] += delta
            assert 0 <= used[nid] <= by_node[nid].cpus

    def test_trace_count_equals_instances(self):
        nodes = tuple(demo_cluster("5;5;5", seed=1))
        wf = synthesize_workflow("mem_heavy", 7, seed=9)
        store = TraceStore()
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="sjfn",
                          seed=2, repetitions=3, warm_start=True)
        report = run(scn, store)
        assert len(store) == sum(row.instances for row in report.rows)

    def test_cold_store_untouched_without_warm_start(self):
        nodes = tuple(demo_cluster("5;5;5", seed=1))
        wf = synthesize_workflow("mixed", 5, seed=0)
        store = TraceStore()
        run(SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="fair", seed=2, repetitions=2), store)
        assert len(store) == 0

    def test_warm_start_removes_unknown_decisions_after_first_rep(self):
        nodes = tuple(demo_cluster("5;4;4;2", seed=3))
        wf = synthesize_workflow("mixed", 8, seed=6)
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="tarema",
                          seed=1, repetitions=3, warm_start=True)
        report = run(scn, TraceStore())
        unknown = [sum(1 for d in row.decisions if d.rationale == "unknown-least-load") for row in report.rows]
        assert unknown[0] > 0
        assert unknown[1] == 0 and unknown[2] == 0

    def test_impossible_request_deadlocks_with_instance_name(self):
        wf = WorkflowDag(workflow_id="w", tasks=(task("huge", cpus=64, mem=512.0),), edges=())
        scn = SimScenario(nodes=(node(),), workflows=((wf, 0.0),), scheduler="fair", seed=0)
        with pytest.raises(SimulationDeadlock, match="huge"):
            run(scn, TraceStore())

    def test_parallel_workflows_with_arrival_offsets(self):
        nodes = tuple(demo_cluster("5;5;5", seed=4))
        wfa = synthesize_workflow("mixed", 5, seed=1)
        wfb = synthesize_workflow("cpu_heavy", 5, seed=2)
        scn = SimScenario(nodes=nodes, workflows=((wfa, 0.0), (wfb, 100.0)), scheduler="tarema", seed=0)
        report = run(scn, TraceStore())
        submits = [r.submit_time for r in report.rows[0].records if r.workflow_run_id.endswith("#1")]
        assert min(submits) == pytest.approx(100.0)
        total = sum(t.instances for t in wfa.tasks) + sum(t.instances for t in wfb.tasks)
        assert report.rows[0].instances == total


class TestRestrictedCluster:
    def test_disable_drops_floor_fraction_per_group(self):
        nodes = demo_cluster("5;4;4;2", seed=1)
        groups = profile_cluster(nodes, seed=1)
        sizes = sorted(len(g.members) for g in groups.groups)
        assert sizes == [2, 4, 9]
        active = restricted_active_set(groups, 0.4)
        # floor(0.4 * {9, 4, 2}) = {3, 1, 0} nodes dropped
        assert len(active) == 15 - 3 - 1 - 0
        for g in groups.groups:
            kept = [m for m in g.members if m in active]
            dropped = sorted(set(g.members) - set(kept))
            assert len(dropped) == int(0.4 * len(g.members))
            assert dropped == sorted(g.members)[: len(dropped)]  # lowest ids go first

    def test_restricted_scenario_completes(self):
        nodes = tuple(demo_cluster("5;4;4;2", seed=1))
        wf = synthesize_workflow("mixed", 6, seed=3)
        scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="tarema",
                          seed=0, disable_fraction=0.4)
        report = run(scn, TraceStore())
        assert report.rows[0].instances == sum(t.instances for t in wf.tasks)
        assert len(report.active_nodes) == 11


class TestSynthesizeWorkflow:
    def test_size_one_is_single_task(self):
        dag = synthesize_workflow("mixed", 1, seed=0)
        assert len(dag.tasks) == 1
        assert dag.edges == ()

    def test_cpu_heavy_is_mostly_cpu_bound(self):
        dag = synthesize_workflow("cpu_heavy", 10, seed=5)
        high = sum(1 for t in dag.tasks if t.behavior.cpu_util_pct > 150.0)
        assert high >= 7

    def test_profiles_are_deterministic(self):
        assert synthesize_workflow("mem_heavy", 9, seed=21) == synthesize_workflow("mem_heavy", 9, seed=21)
        assert synthesize_workflow("mem_heavy", 9, seed=21) != synthesize_workflow("mem_heavy", 9, seed=22)

    def test_default_request_everywhere(self):
        dag = synthesize_workflow("mixed", 8, seed=3)
        for t in dag.tasks:
            assert (t.request.cpus, t.request.mem_gb) == (2, 5.0)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValidationError):
            synthesize_workflow("gpu_heavy", 5, seed=0)
        with pytest.raises(ValidationError):
            synthesize_workflow("mixed", 0, seed=0)


def test_report_csv_has_rep_rows_and_summary(tmp_path):
    nodes = tuple(demo_cluster("5;5;5", seed=0))
    wf = synthesize_workflow("mixed", 5, seed=7)
    scn = SimScenario(nodes=nodes, workflows=((wf, 0.0),), scheduler="rr", seed=1, repetitions=2)
    report = run(scn, TraceStore())
    path = tmp_path / "report.csv"
    write_report_csv(report, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 + 1  # header + reps + summary
    assert lines[1].startswith("rep,0,")
    assert lines[-1].startswith("summary,")
