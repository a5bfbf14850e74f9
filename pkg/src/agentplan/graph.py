"""Directed task graphs for agent workloads.

A workload is a directed, possibly cyclic graph of typed tasks. Back-edges
must carry a max-iteration annotation so cycles can be unrolled into a
finite acyclic graph before planning. All operations here are pure: they
never mutate their inputs and return fresh graphs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import CyclicGraph, PortMismatch, UnboundedCycle


class TaskKind(str, Enum):
    INPUT = "input"
    OUTPUT = "output"
    AGENT = "agent"
    MODEL_EXEC = "llm"
    PREFILL = "prefill"
    DECODE = "decode"
    TOOL_CALL = "tool"
    MEMORY_LOOKUP = "memory"
    KV_STORE = "kv"
    GENERAL_COMPUTE = "compute"
    CONTROL_FLOW = "control"
    OBSERVATION_STORE = "observe"


RESOURCE_FIELDS = (
    "hp_compute_tflops",
    "hp_compute_fp8_tflops",
    "mem_bandwidth_gbps_bytes",
    "mem_capacity_gb",
    "net_bandwidth_gbps_bits",
    "disk_capacity_gb",
    "gp_compute_units",
)


@dataclass(frozen=True)
class ResourceVector:
    """Per-task resource demand or per-device capacity along six hardware
    dimensions plus an optional FP8 compute figure. Absent components are 0,
    which reads as "no demand" for tasks and "unlimited" for capacities."""

    hp_compute_tflops: float = 0.0
    hp_compute_fp8_tflops: float = 0.0
    mem_bandwidth_gbps_bytes: float = 0.0
    mem_capacity_gb: float = 0.0
    net_bandwidth_gbps_bits: float = 0.0
    disk_capacity_gb: float = 0.0
    gp_compute_units: float = 0.0

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            **{f: getattr(self, f) + getattr(other, f) for f in RESOURCE_FIELDS}
        )

    def nonzero(self) -> dict:
        return {f: getattr(self, f) for f in RESOURCE_FIELDS if getattr(self, f)}

    def to_json(self) -> dict:
        return self.nonzero()

    @classmethod
    def from_json(cls, d: dict) -> "ResourceVector":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class TaskNode:
    id: str
    kind: TaskKind
    demand: ResourceVector = field(default_factory=ResourceVector)
    static_latency_ms: float = 0.0
    payload: dict = field(default_factory=dict)
    subgraph: Optional["TaskGraph"] = None  # Agent nodes only

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "kind": self.kind.value,
            "demand": self.demand.to_json(),
            "static_latency_ms": self.static_latency_ms,
            "payload": self.payload,
        }
        if self.subgraph is not None:
            d["subgraph"] = self.subgraph.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TaskNode":
        return cls(
            id=d["id"],
            kind=TaskKind(d["kind"]),
            demand=ResourceVector.from_json(d.get("demand", {})),
            static_latency_ms=float(d.get("static_latency_ms", 0.0)),
            payload=dict(d.get("payload", {})),
            subgraph=TaskGraph.from_json(d["subgraph"]) if "subgraph" in d else None,
        )


@dataclass
class GraphEdge:
    src: str
    dst: str
    transfer_bytes: int = 0
    mode: str = "sync"  # sync | async
    loop_annotation: Optional[int] = None  # max iterations, back-edges only

    def to_json(self) -> dict:
        d = {"src": self.src, "dst": self.dst, "transfer_bytes": self.transfer_bytes,
             "mode": self.mode}
        if self.loop_annotation is not None:
            d["loop_annotation"] = self.loop_annotation
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GraphEdge":
        return cls(
            src=d["src"],
            dst=d["dst"],
            transfer_bytes=int(d.get("transfer_bytes", 0)),
            mode=d.get("mode", "sync"),
            loop_annotation=d.get("loop_annotation"),
        )


@dataclass
class TaskGraph:
    name: str = "g"
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    inputs: list = field(default_factory=list)   # node id port lists
    outputs: list = field(default_factory=list)

    def node_map(self) -> dict:
        return {n.id: n for n in self.nodes}

    def successors(self, node_id: str, include_back: bool = True) -> list:
        return [e.dst for e in self.edges
                if e.src == node_id and (include_back or e.loop_annotation is None)]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "nodes": [n.to_json() for n in self.nodes],
            "edges": [e.to_json() for e in self.edges],
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "TaskGraph":
        return cls(
            name=d.get("name", "g"),
            nodes=[TaskNode.from_json(n) for n in d.get("nodes", [])],
            edges=[GraphEdge.from_json(e) for e in d.get("edges", [])],
            inputs=list(d.get("inputs", [])),
            outputs=list(d.get("outputs", [])),
        )

    @classmethod
    def from_json_str(cls, text: str) -> "TaskGraph":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class SlaSpec:
    """Latency or throughput targets plus the slack penalty lambda.
    lambda_per_ms == inf makes every latency bound hard."""

    mode: str = "latency"  # latency | throughput
    ttft_ms: Optional[float] = None
    tbt_ms: Optional[float] = None
    e2e_ms: Optional[float] = None
    min_throughput: Optional[float] = None
    lambda_per_ms: float = float("inf")
    scope: str = "end_to_end"  # per_task | end_to_end

    def __post_init__(self):
        if self.lambda_per_ms < 0:
            raise ValueError("lambda_per_ms must be >= 0")
        if self.mode == "latency" and not any(
            b is not None for b in (self.ttft_ms, self.tbt_ms, self.e2e_ms)
        ):
            raise ValueError("latency mode requires at least one bound")


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    node_id: Optional[str] = None
    edge: Optional[tuple] = None


def validate_graph(g: TaskGraph) -> list:
    """Check every structural invariant; returns diagnostics instead of
    raising so callers can report all problems at once."""
    diags = []
    seen = set()
    for n in g.nodes:
        if n.id in seen:
            diags.append(Diagnostic("duplicate-id", f"node id {n.id!r} repeated", n.id))
        seen.add(n.id)
        if n.static_latency_ms < 0:
            diags.append(Diagnostic("negative-latency", f"node {n.id!r}", n.id))
        if any(v < 0 for v in n.demand.nonzero().values()):
            diags.append(Diagnostic("negative-demand", f"node {n.id!r}", n.id))
        if n.kind is TaskKind.AGENT and n.subgraph is None:
            diags.append(Diagnostic("agent-missing-subgraph", f"node {n.id!r}", n.id))
        if n.kind is not TaskKind.AGENT and n.subgraph is not None:
            diags.append(Diagnostic("unexpected-subgraph", f"node {n.id!r}", n.id))
        if n.subgraph is not None:
            for d in validate_graph(n.subgraph):
                diags.append(Diagnostic(d.code, f"(in {n.id!r}) {d.message}",
                                        d.node_id, d.edge))

    ids = {n.id for n in g.nodes}
    for e in g.edges:
        if e.src not in ids or e.dst not in ids:
            diags.append(Diagnostic("dangling-edge", f"{e.src}->{e.dst}",
                                    edge=(e.src, e.dst)))
        if e.transfer_bytes < 0:
            diags.append(Diagnostic("negative-bytes", f"{e.src}->{e.dst}",
                                    edge=(e.src, e.dst)))
        if e.loop_annotation is not None and e.loop_annotation < 1:
            diags.append(Diagnostic("bad-loop-annotation", f"{e.src}->{e.dst}",
                                    edge=(e.src, e.dst)))

    for pid in g.inputs:
        if pid not in ids:
            diags.append(Diagnostic("unknown-port", f"input {pid!r}", pid))
        elif any(e.dst == pid for e in g.edges):
            diags.append(Diagnostic("input-has-incoming", pid, pid))
    for pid in g.outputs:
        if pid not in ids:
            diags.append(Diagnostic("unknown-port", f"output {pid!r}", pid))
        elif any(e.src == pid for e in g.edges):
            diags.append(Diagnostic("output-has-outgoing", pid, pid))

    # any cycle among unannotated edges is unbounded
    for e in _unannotated_back_edges(g):
        diags.append(Diagnostic("unbounded-cycle",
                                f"cycle through {e.src}->{e.dst} lacks loop_annotation",
                                edge=(e.src, e.dst)))
    return diags


def _unannotated_back_edges(g: TaskGraph) -> list:
    """DFS back-edges in the subgraph of edges without loop annotations."""
    adj: dict = {n.id: [] for n in g.nodes}
    for e in g.edges:
        if e.loop_annotation is None and e.src in adj and e.dst in adj:
            adj[e.src].append(e)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in adj}
    back = []

    def dfs(u):
        color[u] = GRAY
        for e in adj[u]:
            if color[e.dst] == GRAY:
                back.append(e)
            elif color[e.dst] == WHITE:
                dfs(e.dst)
        color[u] = BLACK

    for nid in adj:
        if color[nid] == WHITE:
            dfs(nid)
    return back


def topological_order(g: TaskGraph, ignore_back_edges: bool = False) -> list:
    """Kahn's algorithm with lexicographic tie-breaking on node id."""
    import heapq

    ids = [n.id for n in g.nodes]
    indeg = {nid: 0 for nid in ids}
    adj = {nid: [] for nid in ids}
    for e in g.edges:
        if ignore_back_edges and e.loop_annotation is not None:
            continue
        if e.src in indeg and e.dst in indeg:
            adj[e.src].append(e.dst)
            indeg[e.dst] += 1
    ready = [nid for nid in ids if indeg[nid] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for m in sorted(adj[nid]):
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, m)
    if len(order) != len(ids):
        raise CyclicGraph(f"graph {g.name!r} has an unannotated cycle")
    return order


def is_acyclic(g: TaskGraph) -> bool:
    try:
        topological_order(g)
        return True
    except CyclicGraph:
        return False


def unroll_cycles(g: TaskGraph) -> TaskGraph:
    """Replicate each annotated loop body k times so the result is acyclic.

    Entry edges into the loop land on the first copy; exit edges leave from
    the last copy; the back-edge becomes forward edges between copies.
    Raises UnboundedCycle when a cycle carries no annotation.
    """
    if _unannotated_back_edges(g):
        raise UnboundedCycle(f"graph {g.name!r} has a cycle without loop_annotation")

    g = copy.deepcopy(g)
    while True:
        back = next((e for e in g.edges if e.loop_annotation is not None), None)
        if back is None:
            return g
        g = _unroll_one(g, back)


def _unroll_one(g: TaskGraph, back: GraphEdge) -> TaskGraph:
    k = back.loop_annotation
    head, tail = back.dst, back.src  # loop runs head ... tail, back tail->head
    fwd = [e for e in g.edges if e is not back]
    reach_from_head = _reachable({head}, fwd, forward=True)
    reach_to_tail = _reachable({tail}, fwd, forward=False)
    body = reach_from_head & reach_to_tail
    if head not in body or tail not in body:
        # degenerate annotation on a non-cycle: drop it
        edges = [e if e is not back else replace(e, loop_annotation=None)
                 for e in g.edges]
        return replace(g, edges=edges)

    nmap = g.node_map()
    copy_id: Callable[[str, int], str] = lambda nid, t: f"{nid}#{t}"
    new_nodes = [copy.deepcopy(n) for n in g.nodes if n.id not in body]
    new_edges = []
    for t in range(1, k + 1):
        for nid in body:
            dup = copy.deepcopy(nmap[nid])
            dup.id = copy_id(nid, t)
            new_nodes.append(dup)
    for e in fwd:
        s_in, d_in = e.src in body, e.dst in body
        if s_in and d_in:
            for t in range(1, k + 1):
                new_edges.append(replace(e, src=copy_id(e.src, t), dst=copy_id(e.dst, t)))
        elif d_in:  # entry edge
            new_edges.append(replace(e, dst=copy_id(e.dst, 1)))
        elif s_in:  # exit edge
            new_edges.append(replace(e, src=copy_id(e.src, k)))
        else:
            new_edges.append(copy.deepcopy(e))
    for t in range(1, k):  # unrolled back-edge
        new_edges.append(GraphEdge(copy_id(tail, t), copy_id(head, t + 1),
                                   transfer_bytes=back.transfer_bytes, mode=back.mode))
    remap = lambda nid: copy_id(nid, 1) if nid in body else nid
    return TaskGraph(
        name=g.name,
        nodes=new_nodes,
        edges=new_edges,
        inputs=[remap(p) for p in g.inputs],
        outputs=[copy_id(p, k) if p in body else p for p in g.outputs],
    )


def _reachable(seeds: set, edges: Iterable[GraphEdge], forward: bool) -> set:
    adj: dict = {}
    for e in edges:
        a, b = (e.src, e.dst) if forward else (e.dst, e.src)
        adj.setdefault(a, []).append(b)
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def critical_path_ms(g: TaskGraph, node_times: dict, edge_times: Optional[dict] = None) -> float:
    """Longest path through an acyclic graph. node_times maps node id -> ms;
    edge_times optionally maps (src, dst) -> ms for transfer latencies."""
    order = topological_order(g)  # raises CyclicGraph
    edge_times = edge_times or {}
    missing = [nid for nid in order if nid not in node_times]
    if missing:
        raise KeyError(f"node_times missing entries for {missing}")
    finish = {}
    preds: dict = {nid: [] for nid in order}
    for e in g.edges:
        preds[e.dst].append(e)
    best = 0.0
    for nid in order:
        start = 0.0
        for e in preds[nid]:
            start = max(start, finish[e.src] + edge_times.get((e.src, e.dst), 0.0))
        finish[nid] = start + node_times[nid]
        best = max(best, finish[nid])
    return best


def flatten_hierarchy(g: TaskGraph) -> TaskGraph:
    """Inline every Agent node's subgraph, splicing out the inner port nodes
    so the external interface is unchanged. Inner ids get the agent id as a
    dotted prefix."""
    if not any(n.kind is TaskKind.AGENT for n in g.nodes):
        return copy.deepcopy(g)

    out = copy.deepcopy(g)
    while True:
        agent = next((n for n in out.nodes if n.kind is TaskKind.AGENT), None)
        if agent is None:
            return out
        out = _inline_agent(out, agent)


def _inline_agent(g: TaskGraph, agent: TaskNode) -> TaskGraph:
    sub = flatten_hierarchy(agent.subgraph)
    in_edges = [e for e in g.edges if e.dst == agent.id]
    out_edges = [e for e in g.edges if e.src == agent.id]
    if len(sub.inputs) > 1 and len(in_edges) != len(sub.inputs):
        raise PortMismatch(
            f"agent {agent.id!r}: {len(in_edges)} incoming edges for {len(sub.inputs)} input ports")
    if len(sub.outputs) > 1 and len(out_edges) != len(sub.outputs):
        raise PortMismatch(
            f"agent {agent.id!r}: {len(out_edges)} outgoing edges for {len(sub.outputs)} output ports")
    if not sub.inputs and in_edges:
        raise PortMismatch(f"agent {agent.id!r}: incoming edges but no input ports")
    if not sub.outputs and out_edges:
        raise PortMismatch(f"agent {agent.id!r}: outgoing edges but no output ports")

    pref = lambda nid: f"{agent.id}.{nid}"
    port_ids = set(sub.inputs) | set(sub.outputs)
    inner_nodes = []
    for n in sub.nodes:
        if n.id in port_ids:
            continue  # spliced out
        dup = copy.deepcopy(n)
        dup.id = pref(n.id)
        inner_nodes.append(dup)

    # edges internal to the subgraph, rerouted around port nodes
    in_port_succ = {p: [e for e in sub.edges if e.src == p] for p in sub.inputs}
    out_port_pred = {p: [e for e in sub.edges if e.dst == p] for p in sub.outputs}
    inner_edges = [replace(e, src=pref(e.src), dst=pref(e.dst))
                   for e in sub.edges
                   if e.src not in port_ids and e.dst not in port_ids]

    new_edges = []
    for idx, e in enumerate(in_edges):
        port = sub.inputs[idx] if len(sub.inputs) > 1 else sub.inputs[0]
        for pe in in_port_succ[port]:
            new_edges.append(replace(e, dst=pref(pe.dst)))
    for idx, e in enumerate(out_edges):
        port = sub.outputs[idx] if len(sub.outputs) > 1 else sub.outputs[0]
        for pe in out_port_pred[port]:
            new_edges.append(replace(e, src=pref(pe.src)))

    nodes = [n for n in g.nodes if n.id != agent.id] + inner_nodes
    edges = [e for e in g.edges if e.src != agent.id and e.dst != agent.id]
    edges += inner_edges + new_edges
    return TaskGraph(name=g.name, nodes=nodes, edges=edges,
                     inputs=list(g.inputs), outputs=list(g.outputs))
