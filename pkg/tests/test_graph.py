import pytest

from agentplan.errors import CyclicGraph, PortMismatch, UnboundedCycle
from agentplan.graph import (
    GraphEdge,
    ResourceVector,
    SlaSpec,
    TaskGraph,
    TaskKind,
    TaskNode,
    critical_path_ms,
    flatten_hierarchy,
    is_acyclic,
    topological_order,
    unroll_cycles,
    validate_graph,
)


def chain(*ids, kind=TaskKind.GENERAL_COMPUTE):
    nodes = [TaskNode(i, kind) for i in ids]
    edges = [GraphEdge(a, b) for a, b in zip(ids, ids[1:])]
    return TaskGraph("t", nodes, edges)


def test_topological_order_lexicographic_ties():
    g = TaskGraph("t", [TaskNode(i, TaskKind.GENERAL_COMPUTE) for i in "cab"], [])
    assert topological_order(g) == ["a", "b", "c"]


def test_topological_order_respects_edges():
    g = chain("z", "m", "a")
    assert topological_order(g) == ["z", "m", "a"]


def test_unannotated_cycle_raises():
    g = chain("a", "b")
    g.edges.append(GraphEdge("b", "a"))
    with pytest.raises(CyclicGraph):
        topological_order(g)
    assert not is_acyclic(g)
    assert any(d.code == "unbounded-cycle" for d in validate_graph(g))


def test_annotated_back_edge_ignored_in_topo():
    g = chain("a", "b")
    g.edges.append(GraphEdge("b", "a", loop_annotation=3))
    assert topological_order(g, ignore_back_edges=True) == ["a", "b"]
    assert not validate_graph(g)


def test_validate_dangling_edge_and_negative_values():
    g = chain("a", "b")
    g.edges.append(GraphEdge("a", "ghost"))
    g.nodes[0].static_latency_ms = -1.0
    codes = {d.code for d in validate_graph(g)}
    assert "dangling-edge" in codes
    assert "negative-latency" in codes


def test_unroll_duplicates_body_k_times():
    # pre -> head -> tail -> post, tail loops back to head twice more
    g = chain("pre", "head", "tail", "post")
    g.edges.append(GraphEdge("tail", "head", loop_annotation=3))
    u = unroll_cycles(g)
    assert is_acyclic(u)
    ids = {n.id for n in u.nodes}
    # body {head, tail} replicated 3 times, pre/post untouched
    assert ids == {"pre", "post"} | {f"{b}#{t}" for b in ("head", "tail")
                                     for t in (1, 2, 3)}
    # entry lands on copy 1, exit leaves copy 3
    assert any(e.src == "pre" and e.dst == "head#1" for e in u.edges)
    assert any(e.src == "tail#3" and e.dst == "post" for e in u.edges)
    assert any(e.src == "tail#1" and e.dst == "head#2" for e in u.edges)


def test_unroll_requires_annotation():
    g = chain("a", "b")
    g.edges.append(GraphEdge("b", "a"))
    with pytest.raises(UnboundedCycle):
        unroll_cycles(g)


def test_unroll_annotation_on_acyclic_edge_is_dropped():
    g = chain("a", "b")
    g.edges[0].loop_annotation = 4
    u = unroll_cycles(g)
    assert {n.id for n in u.nodes} == {"a", "b"}
    assert all(e.loop_annotation is None for e in u.edges)


def test_critical_path_diamond():
    g = TaskGraph(
        "d",
        [TaskNode(i, TaskKind.GENERAL_COMPUTE) for i in "abcd"],
        [GraphEdge("a", "b"), GraphEdge("a", "c"),
         GraphEdge("b", "d"), GraphEdge("c", "d")],
    )
    times = {"a": 1.0, "b": 10.0, "c": 2.0, "d": 1.0}
    assert critical_path_ms(g, times) == 12.0
    assert critical_path_ms(g, times, {("a", "c"): 50.0}) == 54.0


def test_critical_path_missing_time_raises():
    with pytest.raises(KeyError):
        critical_path_ms(chain("a", "b"), {"a": 1.0})


def _agent_graph():
    inner = TaskGraph(
        "inner",
        [TaskNode("in", TaskKind.INPUT),
         TaskNode("work", TaskKind.GENERAL_COMPUTE, static_latency_ms=5.0),
         TaskNode("out", TaskKind.OUTPUT)],
        [GraphEdge("in", "work"), GraphEdge("work", "out")],
        inputs=["in"], outputs=["out"],
    )
    return TaskGraph(
        "outer",
        [TaskNode("src", TaskKind.INPUT),
         TaskNode("bot", TaskKind.AGENT, subgraph=inner),
         TaskNode("dst", TaskKind.OUTPUT)],
        [GraphEdge("src", "bot", transfer_bytes=8), GraphEdge("bot", "dst")],
        inputs=["src"], outputs=["dst"],
    )


def test_flatten_inlines_agent_and_splices_ports():
    flat = flatten_hierarchy(_agent_graph())
    ids = {n.id for n in flat.nodes}
    assert ids == {"src", "bot.work", "dst"}
    assert any(e.src == "src" and e.dst == "bot.work" and e.transfer_bytes == 8
               for e in flat.edges)
    assert any(e.src == "bot.work" and e.dst == "dst" for e in flat.edges)


def test_flatten_is_pure():
    g = _agent_graph()
    flatten_hierarchy(g)
    assert any(n.kind is TaskKind.AGENT for n in g.nodes)


def test_flatten_port_mismatch():
    g = _agent_graph()
    inner = g.node_map()["bot"].subgraph
    inner.inputs.append("work")  # two input ports, one incoming edge
    with pytest.raises(PortMismatch):
        flatten_hierarchy(g)


def test_resource_vector_addition_and_json():
    a = ResourceVector(gp_compute_units=2.0)
    b = ResourceVector(gp_compute_units=1.0, mem_capacity_gb=4.0)
    s = a + b
    assert s.gp_compute_units == 3.0 and s.mem_capacity_gb == 4.0
    assert ResourceVector.from_json(s.to_json()) == s


def test_graph_json_roundtrip():
    g = _agent_graph()
    assert TaskGraph.from_json_str(g.to_json_str()).to_json_str() == g.to_json_str()


def test_sla_validation():
    with pytest.raises(ValueError):
        SlaSpec(mode="latency")  # no bound given
    with pytest.raises(ValueError):
        SlaSpec(mode="throughput", lambda_per_ms=-1.0)
    s = SlaSpec(mode="latency", e2e_ms=10.0)
    assert s.scope == "end_to_end"
