"""DAG validation, scheduling, and executor tests."""

from __future__ import annotations

import numpy as np
import pytest

from smartmlops.errors import CyclicGraphError, GraphValidationError
from smartmlops.graph import (
    PipelineSpec,
    RunContext,
    StepNode,
    execute,
    topo_schedule,
    validate_graph,
)

from conftest import make_random_dag


def noop(nid, **kw):
    return StepNode(id=nid, kind="noop", outputs={"out": f"art-{nid}"}, **kw)


def diamond(fail_node=None):
    nodes = []
    for nid in "ABCD":
        params = {"fail": True} if nid == fail_node else {}
        nodes.append(StepNode(id=nid, kind="noop", params=params, outputs={"out": f"art-{nid}"}))
    edges = [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]
    return PipelineSpec(name="diamond", nodes=nodes, edges=edges)


# -- validation -------------------------------------------------------------


def test_empty_pipeline_is_valid():
    assert validate_graph(PipelineSpec(name="empty")) == []


def test_two_cycle_names_both_nodes():
    spec = PipelineSpec(name="c", nodes=[noop("A"), noop("B")], edges=[("A", "B"), ("B", "A")])
    errors = validate_graph(spec)
    assert len(errors) == 1
    assert "cycle" in errors[0] and "'A'" in errors[0] and "'B'" in errors[0]


def test_dangling_edge_names_missing_node():
    spec = PipelineSpec(name="d", nodes=[noop("A")], edges=[("A", "X")])
    errors = validate_graph(spec)
    assert any("unknown node 'X'" in e for e in errors)


def test_duplicate_and_empty_ids():
    spec = PipelineSpec(name="d", nodes=[noop("A"), noop("A")])
    assert any("duplicate node id: A" in e for e in validate_graph(spec))
    spec = PipelineSpec(name="d", nodes=[StepNode(id="", kind="noop")])
    assert any("empty node id" in e for e in validate_graph(spec))


def test_unknown_kind_and_missing_params():
    spec = PipelineSpec(name="k", nodes=[StepNode(id="A", kind="quantum")])
    assert any("unknown step kind" in e for e in validate_graph(spec))
    spec = PipelineSpec(name="k", nodes=[StepNode(id="A", kind="ingest")])  # no path param
    assert any("requires param 'path'" in e for e in validate_graph(spec))


def test_artifact_rules():
    a = StepNode(id="A", kind="noop", outputs={"out": "x"})
    b = StepNode(id="B", kind="noop", outputs={"out": "x"})
    errors = validate_graph(PipelineSpec(name="p", nodes=[a, b]))
    assert any("produced by multiple nodes" in e for e in errors)

    c = StepNode(id="C", kind="noop", inputs={"in": "ghost"})
    errors = validate_graph(PipelineSpec(name="p", nodes=[c]))
    assert any("no producer for artifact 'ghost'" in e for e in errors)

    d = StepNode(id="D", kind="noop", inputs={"in": "y"}, outputs={"out": "y"})
    errors = validate_graph(PipelineSpec(name="p", nodes=[d]))
    assert any("its own output" in e for e in errors)


def test_self_edge_rejected():
    spec = PipelineSpec(name="s", nodes=[noop("A")], edges=[("A", "A")])
    assert any("self-edge" in e for e in validate_graph(spec))


def test_artifact_wiring_creates_cycle():
    a = StepNode(id="A", kind="noop", inputs={"in": "bee"}, outputs={"out": "aay"})
    b = StepNode(id="B", kind="noop", inputs={"in": "aay"}, outputs={"out": "bee"})
    errors = validate_graph(PipelineSpec(name="p", nodes=[a, b]))
    assert any("cycle" in e for e in errors)


# -- scheduling ---------------------------------------------------------------


def test_diamond_layers():
    schedule = topo_schedule(diamond())
    assert schedule.layers == (("A",), ("B", "C"), ("D",))


def test_chain_layers():
    spec = PipelineSpec(name="chain", nodes=[noop("A"), noop("B"), noop("C")],
                        edges=[("A", "B"), ("B", "C")])
    assert topo_schedule(spec).layers == (("A",), ("B",), ("C",))


def test_isolated_nodes_share_a_layer():
    spec = PipelineSpec(name="iso", nodes=[noop("B"), noop("A")])
    assert topo_schedule(spec).layers == (("A", "B"),)


def test_asap_longest_path_layering():
    # A->B->D, A->D: D sits at layer 2 (longest path), not 1
    spec = PipelineSpec(
        name="lp",
        nodes=[noop("A"), noop("B"), noop("D")],
        edges=[("A", "B"), ("B", "D"), ("A", "D")],
    )
    assert topo_schedule(spec).layers == (("A",), ("B",), ("D",))


def test_cyclic_schedule_raises():
    spec = PipelineSpec(name="c", nodes=[noop("A"), noop("B")], edges=[("A", "B"), ("B", "A")])
    with pytest.raises(CyclicGraphError) as exc:
        topo_schedule(spec)
    assert exc.value.nodes == ["A", "B"]


def test_schedule_deterministic():
    spec = diamond()
    assert topo_schedule(spec) == topo_schedule(spec)


# -- execution ----------------------------------------------------------------


def test_all_succeed_with_digests(tmp_path):
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store", run_id="r1")
    record = execute(diamond(), max_parallel=4, context=ctx)
    assert record.status == "succeeded"
    assert all(r.status == "succeeded" for r in record.nodes.values())
    for nid in "ABCD":
        art = record.nodes[nid].artifacts[f"art-{nid}"]
        assert len(art.sha256) == 64
    assert (tmp_path / "runs" / "r1" / "record.json").is_file()


def test_diamond_failure_skips_descendants_only(tmp_path):
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store")
    record = execute(diamond(fail_node="B"), context=ctx)
    assert record.status == "failed"
    assert record.nodes["A"].status == "succeeded"
    assert record.nodes["B"].status == "failed"
    assert record.nodes["C"].status == "succeeded"  # unaffected by B
    assert record.nodes["D"].status == "skipped"


def test_serial_and_parallel_identical(tmp_path):
    serial = execute(
        diamond(fail_node="B"),
        max_parallel=1,
        context=RunContext(runs_root=tmp_path / "s", store_root=tmp_path / "store"),
    )
    parallel = execute(
        diamond(fail_node="B"),
        max_parallel=8,
        context=RunContext(runs_root=tmp_path / "p", store_root=tmp_path / "store"),
    )
    assert serial.signature() == parallel.signature()


def test_missing_input_fails_consumer(tmp_path):
    # B deletes A's artifact before C consumes it
    nodes = [
        noop("A"),
        StepNode(id="B", kind="command", inputs={"f": "art-A"}, outputs={"out": "art-B"},
                 command='rm "$INPUT_F" && echo ok > "$OUTPUT_OUT"'),
        StepNode(id="C", kind="noop", inputs={"f": "art-A", "g": "art-B"},
                 outputs={"out": "art-C"}),
    ]
    spec = PipelineSpec(name="m", nodes=nodes)
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store")
    record = execute(spec, context=ctx)
    assert record.nodes["B"].status == "succeeded"
    assert record.nodes["C"].status == "failed"
    assert "missing input artifact" in record.nodes["C"].error


def test_command_step_failure_and_env(tmp_path):
    nodes = [
        StepNode(id="A", kind="command", outputs={"out": "a.txt"},
                 command='echo "seed=$SMARTMLOPS_SEED" > "$OUTPUT_OUT"'),
        StepNode(id="B", kind="command", inputs={"x": "a.txt"}, outputs={"out": "b.txt"},
                 command="exit 3"),
    ]
    spec = PipelineSpec(name="cmd", nodes=nodes)
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store", seed=7)
    record = execute(spec, context=ctx)
    assert record.nodes["A"].status == "succeeded"
    path = record.nodes["A"].artifacts["a.txt"].path
    assert open(path).read().strip() == "seed=7"
    assert record.nodes["B"].status == "failed"
    assert "exited with 3" in record.nodes["B"].error


def test_missing_declared_output_fails_node(tmp_path):
    spec = PipelineSpec(
        name="noout",
        nodes=[StepNode(id="A", kind="command", outputs={"out": "never.txt"}, command="true")],
    )
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store")
    record = execute(spec, context=ctx)
    assert record.nodes["A"].status == "failed"
    assert "did not produce" in record.nodes["A"].error


def test_execute_rejects_invalid_spec(tmp_path):
    spec = PipelineSpec(name="bad", nodes=[noop("A"), noop("A")])
    with pytest.raises(GraphValidationError):
        execute(spec, context=RunContext(runs_root=tmp_path, store_root=tmp_path))


def test_param_overrides_apply(tmp_path):
    spec = PipelineSpec(name="ovr", nodes=[noop("A")])
    ctx = RunContext(runs_root=tmp_path / "runs", store_root=tmp_path / "store",
                     param_overrides={"A": {"payload": "patched"}})
    record = execute(spec, context=ctx)
    path = record.nodes["A"].artifacts["art-A"].path
    assert open(path).read() == "patched"


# -- randomized properties -------------------------------------------------


def test_random_dags_schedule_and_execute(tmp_path, rng):
    for i in range(60):
        spec = make_random_dag(rng, max_nodes=25, fail_prob=0.1)
        errors = validate_graph(spec)
        assert errors == []

        schedule = topo_schedule(spec)
        layer_of = {nid: li for li, layer in enumerate(schedule.layers) for nid in layer}
        from smartmlops.graph import effective_edges

        for u, v in effective_edges(spec):
            assert layer_of[u] < layer_of[v]

        serial = execute(spec, max_parallel=1,
                         context=RunContext(runs_root=tmp_path / f"s{i}", store_root=tmp_path))
        parallel = execute(spec, max_parallel=8,
                           context=RunContext(runs_root=tmp_path / f"p{i}", store_root=tmp_path))
        assert serial.signature() == parallel.signature()

        # skip-propagation: skipped exactly when some ancestor failed
        parents = {}
        for u, v in effective_edges(spec):
            parents.setdefault(v, set()).add(u)

        def ancestors(nid, acc):
            for p in parents.get(nid, ()):
                if p not in acc:
                    acc.add(p)
                    ancestors(p, acc)
            return acc

        for nid, result in serial.nodes.items():
            has_failed_ancestor = any(
                serial.nodes[a].status == "failed" for a in ancestors(nid, set())
            )
            assert (result.status == "skipped") == has_failed_ancestor


def test_injected_cycles_always_rejected(rng):
    rejected = 0
    for _ in range(60):
        spec = make_random_dag(rng, max_nodes=20)
        if len(spec.nodes) < 2:
            continue
        ids = [n.id for n in spec.nodes]
        hi = int(rng.integers(1, len(ids)))
        lo = int(rng.integers(0, hi))
        spec.edges.append((ids[lo], ids[hi]))  # forward path
        spec.edges.append((ids[hi], ids[lo]))  # back-edge closes the cycle
        errors = validate_graph(spec)
        assert any("cycle" in e for e in errors)
        rejected += 1
    assert rejected > 30
