"""Textual frontend for agent graphs plus the lowering pass pipeline.

Grammar (UTF-8, `//` comments to end of line)::

    graph <id> { <decl>* }
    <decl> ::= <id> = <kind>(<id-list>?) { <attr>* }
             | edge <id> -> <id> { <attr>* }
    <attr> ::= <key>=<literal>          literals: int, float, "string", bool

Operand ids lower to zero-byte edges; explicit `edge` declarations carry
transfer sizes and loop annotations. The printer emits a canonical form
(topological node order with lexicographic ties, attributes sorted by key)
so that printing is a fixed point on its own output.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import DslSyntaxError, DuplicateId, MissingTokenCounts, PlanMismatch, UnknownKind, UnknownModel
from .graph import (
    RESOURCE_FIELDS,
    GraphEdge,
    ResourceVector,
    TaskGraph,
    TaskKind,
    TaskNode,
    topological_order,
)

_KINDS = {k.value: k for k in TaskKind}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int


@dataclass
class AstNode:
    id: str
    kind: str
    operands: list
    attrs: dict
    span: Optional[SourceSpan] = None


@dataclass
class AstEdge:
    src: str
    dst: str
    attrs: dict
    span: Optional[SourceSpan] = None


@dataclass
class Ast:
    name: str
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)


@dataclass
class PassReport:
    pass_name: str
    nodes_added: int = 0
    nodes_removed: int = 0
    edges_added: int = 0
    edges_removed: int = 0
    notes: list = field(default_factory=list)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<float>-?\d+\.\d*(?:[eE][+-]?\d+)?|-?\d+[eE][+-]?\d+)
  | (?P<int>-?\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.#+]*)
  | (?P<punct>[{}()=,])
""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    type: str
    text: str
    span: SourceSpan


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslSyntaxError(
                f"unexpected character {text[pos]!r} at line {line}",
                SourceSpan(line, col, pos, pos + 1),
            )
        kind = m.lastgroup
        lexeme = m.group()
        span = SourceSpan(line, col, pos, m.end())
        if kind not in ("ws", "comment"):
            toks.append(_Token(kind, lexeme, span))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    toks.append(_Token("eof", "", SourceSpan(line, col, pos, pos)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.toks[self.i]

    def next(self) -> _Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, type_: str, text: Optional[str] = None) -> _Token:
        t = self.peek()
        if t.type != type_ or (text is not None and t.text != text):
            want = text or type_
            raise DslSyntaxError(
                f"expected {want!r}, got {t.text or t.type!r} at line {t.span.line}",
                t.span,
            )
        return self.next()

    def parse(self) -> Ast:
        self.expect("ident", "graph")
        name = self.expect("ident").text
        self.expect("punct", "{")
        ast = Ast(name=name)
        declared = set()
        while not (self.peek().type == "punct" and self.peek().text == "}"):
            t = self.peek()
            if t.type == "eof":
                raise DslSyntaxError(f"expected '}}' before end of input", t.span)
            if t.type == "ident" and t.text == "edge":
                ast.edges.append(self._edge_decl(declared))
            else:
                ast.nodes.append(self._node_decl(declared))
        self.expect("punct", "}")
        self.expect("eof")
        return ast

    def _node_decl(self, declared: set) -> AstNode:
        ident = self.expect("ident")
        if ident.text in declared:
            raise DuplicateId(f"duplicate id {ident.text!r} at line {ident.span.line}",
                              ident.span)
        self.expect("punct", "=")
        kind = self.expect("ident")
        if kind.text not in _KINDS:
            raise UnknownKind(f"unknown kind {kind.text!r} at line {kind.span.line}",
                              kind.span)
        self.expect("punct", "(")
        operands = []
        while self.peek().type == "ident":
            op = self.next()
            if op.text not in declared:
                raise DslSyntaxError(
                    f"operand {op.text!r} used before declaration at line {op.span.line}",
                    op.span,
                )
            operands.append(op.text)
            if self.peek().type == "punct" and self.peek().text == ",":
                self.next()
        self.expect("punct", ")")
        attrs = self._attr_block()
        declared.add(ident.text)
        return AstNode(ident.text, kind.text, operands, attrs, ident.span)

    def _edge_decl(self, declared: set) -> AstEdge:
        kw = self.expect("ident", "edge")
        src = self.expect("ident")
        self.expect("arrow")
        dst = self.expect("ident")
        for t in (src, dst):
            if t.text not in declared:
                raise DslSyntaxError(
                    f"edge endpoint {t.text!r} undeclared at line {t.span.line}", t.span)
        attrs = self._attr_block()
        return AstEdge(src.text, dst.text, attrs, kw.span)

    def _attr_block(self) -> dict:
        self.expect("punct", "{")
        attrs = {}
        while self.peek().type == "ident":
            key = self.next().text
            self.expect("punct", "=")
            attrs[key] = self._literal()
        self.expect("punct", "}")
        return attrs

    def _literal(self):
        t = self.peek()
        if t.type == "int":
            self.next()
            return int(t.text)
        if t.type == "float":
            self.next()
            return float(t.text)
        if t.type == "string":
            self.next()
            return _unescape(t.text)
        if t.type == "ident" and t.text in ("true", "false"):
            self.next()
            return t.text == "true"
        raise DslSyntaxError(
            f"expected literal, got {t.text or t.type!r} at line {t.span.line}", t.span)


def _unescape(quoted: str) -> str:
    body = quoted[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def _escape(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def parse(text: str) -> Ast:
    return _Parser(text).parse()


def lower(ast: Ast) -> TaskGraph:
    """Lower the surface syntax into a TaskGraph. Operand lists become
    zero-byte edges unless an explicit edge for the same pair exists."""
    nodes = []
    for an in ast.nodes:
        kind = _KINDS[an.kind]
        demand = {}
        latency = 0.0
        payload = {}
        for k, v in an.attrs.items():
            if k == "latency_ms":
                latency = float(v)
            elif k in RESOURCE_FIELDS:
                demand[k] = float(v)
            else:
                payload[k] = v
        nodes.append(TaskNode(an.id, kind, ResourceVector(**demand), latency, payload))

    edges = []
    explicit = set()
    for ae in ast.edges:
        attrs = dict(ae.attrs)
        edges.append(
            GraphEdge(
                ae.src,
                ae.dst,
                transfer_bytes=int(attrs.pop("bytes", 0)),
                mode=attrs.pop("mode", "sync"),
                loop_annotation=attrs.pop("loop", None),
            )
        )
        explicit.add((ae.src, ae.dst))
    for an in ast.nodes:
        for op in an.operands:
            if (op, an.id) not in explicit:
                edges.append(GraphEdge(op, an.id))
                explicit.add((op, an.id))

    inputs = [n.id for n in nodes if n.kind is TaskKind.INPUT]
    outputs = [n.id for n in nodes if n.kind is TaskKind.OUTPUT]
    return TaskGraph(ast.name, nodes, edges, inputs, outputs)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return _escape(str(value))


def print_graph(g: Union[TaskGraph, Ast]) -> str:
    """Canonical text: nodes in topological order (lexicographic ties,
    annotated back-edges ignored), attributes sorted by key, 2-space indent."""
    if isinstance(g, Ast):
        g = lower(g)
    order = topological_order(g, ignore_back_edges=True)
    pos = {nid: i for i, nid in enumerate(order)}
    nmap = g.node_map()
    lines = [f"graph {g.name} {{"]
    for nid in order:
        n = nmap[nid]
        attrs = dict(n.payload)
        if n.static_latency_ms:
            attrs["latency_ms"] = n.static_latency_ms
        attrs.update(n.demand.nonzero())
        body = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(attrs.items()))
        lines.append(f"  {nid} = {n.kind.value}() {{{' ' + body + ' ' if body else ''}}}")
    for e in sorted(g.edges, key=lambda e: (pos[e.src], pos[e.dst], e.src, e.dst)):
        attrs = {"bytes": e.transfer_bytes}
        if e.mode != "sync":
            attrs["mode"] = e.mode
        if e.loop_annotation is not None:
            attrs["loop"] = e.loop_annotation
        body = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(attrs.items()))
        lines.append(f"  edge {e.src} -> {e.dst} {{ {body} }}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- passes -----------------------------------------------------------------


def split_llm(g: TaskGraph, models: dict) -> tuple:
    """Replace each ModelExec node with a Prefill -> Decode pair joined by a
    KV-cache edge sized at batch size 1. models maps name -> ModelSpec."""
    from .perf import kv_cache_bytes

    g2 = copy.deepcopy(g)
    report = PassReport("split_llm")
    targets = [n for n in g2.nodes if n.kind is TaskKind.MODEL_EXEC]
    for n in targets:
        name = n.payload.get("model")
        if name not in models:
            raise UnknownModel(f"node {n.id!r}: model {name!r} not in catalog")
        if "in_tokens" not in n.payload or "out_tokens" not in n.payload:
            raise MissingTokenCounts(f"node {n.id!r} lacks in_tokens/out_tokens")
        spec = models[name]
        isl = int(n.payload["in_tokens"])
        osl = int(n.payload["out_tokens"])
        prefill = TaskNode(
            f"{n.id}.prefill", TaskKind.PREFILL, n.demand, n.static_latency_ms,
            {"model": name, "in_tokens": isl},
        )
        decode = TaskNode(
            f"{n.id}.decode", TaskKind.DECODE, n.demand, 0.0,
            {"model": name, "in_tokens": isl, "out_tokens": osl},
        )
        kv_edge = GraphEdge(prefill.id, decode.id,
                            transfer_bytes=kv_cache_bytes(spec, isl, 1))
        g2.nodes = [m for m in g2.nodes if m.id != n.id] + [prefill, decode]
        for e in g2.edges:
            if e.dst == n.id:
                e.dst = prefill.id
            if e.src == n.id:
                e.src = decode.id
        g2.edges.append(kv_edge)
        report.nodes_removed += 1
        report.nodes_added += 2
        report.edges_added += 1
        report.notes.append(f"{n.id} -> ({prefill.id}, {decode.id})")
    return g2, report


def split_tool(g: TaskGraph) -> tuple:
    """Replace each ToolCall with a MemoryLookup -> GeneralCompute pair.
    Authored network latency goes to the lookup node, gp_compute demand to
    the compute node."""
    g2 = copy.deepcopy(g)
    report = PassReport("split_tool")
    for n in [m for m in g2.nodes if m.kind is TaskKind.TOOL_CALL]:
        lookup = TaskNode(
            f"{n.id}.lookup", TaskKind.MEMORY_LOOKUP,
            replace(n.demand, gp_compute_units=0.0), n.static_latency_ms,
            {k: v for k, v in n.payload.items() if k != "response_bytes"},
        )
        compute = TaskNode(
            f"{n.id}.compute", TaskKind.GENERAL_COMPUTE,
            ResourceVector(gp_compute_units=n.demand.gp_compute_units), 0.0, {},
        )
        g2.nodes = [m for m in g2.nodes if m.id != n.id] + [lookup, compute]
        for e in g2.edges:
            if e.dst == n.id:
                e.dst = lookup.id
            if e.src == n.id:
                e.src = compute.id
        g2.edges.append(GraphEdge(lookup.id, compute.id,
                                  transfer_bytes=int(n.payload.get("response_bytes", 0))))
        report.nodes_removed += 1
        report.nodes_added += 2
        report.edges_added += 1
        report.notes.append(f"{n.id} -> ({lookup.id}, {compute.id})")
    return g2, report


def fuse_colocated(g: TaskGraph, plan: dict) -> tuple:
    """Merge maximal chains of nodes assigned to the same device class.
    plan maps node id -> class name and must cover every node. Only pure
    chains fuse (single successor / single predecessor), so branch points
    are preserved and end-to-end latency can only drop."""
    ids = {n.id for n in g.nodes}
    if set(plan) < ids:
        raise PlanMismatch(f"plan missing nodes: {sorted(ids - set(plan))}")

    g2 = copy.deepcopy(g)
    report = PassReport("fuse_colocated")
    out_deg: dict = {}
    in_deg: dict = {}
    succ: dict = {}
    for e in g2.edges:
        out_deg[e.src] = out_deg.get(e.src, 0) + 1
        in_deg[e.dst] = in_deg.get(e.dst, 0) + 1
        succ[e.src] = e.dst

    def chain_next(nid):
        if out_deg.get(nid, 0) != 1:
            return None
        nxt = succ[nid]
        if in_deg.get(nxt, 0) != 1:
            return None
        if plan[nxt] != plan[nid]:
            return None
        return nxt

    visited = set()
    chains = []
    for n in g2.nodes:
        if n.id in visited:
            continue
        # only start a chain at a node whose predecessor cannot extend it
        starts = not any(chain_next(e.src) == n.id for e in g2.edges if e.dst == n.id)
        if not starts:
            continue
        chain = [n.id]
        visited.add(n.id)
        cur = n.id
        while True:
            nxt = chain_next(cur)
            if nxt is None or nxt in visited:
                break
            chain.append(nxt)
            visited.add(nxt)
            cur = nxt
        if len(chain) > 1:
            chains.append(chain)

    nmap = g2.node_map()
    for chain in chains:
        members = [nmap[c] for c in chain]
        fused_id = "+".join(chain)
        kinds = {m.kind for m in members}
        kind = members[0].kind if len(kinds) == 1 else TaskKind.GENERAL_COMPUTE
        demand = members[0].demand
        for m in members[1:]:
            demand = demand + m.demand
        fused = TaskNode(
            fused_id, kind, demand,
            sum(m.static_latency_ms for m in members),
            {"fused": list(chain)},
        )
        member_set = set(chain)
        g2.nodes = [m for m in g2.nodes if m.id not in member_set] + [fused]
        kept = []
        for e in g2.edges:
            internal = e.src in member_set and e.dst in member_set
            if internal:
                report.edges_removed += 1
                continue
            if e.src in member_set:
                e.src = fused_id
            if e.dst in member_set:
                e.dst = fused_id
            kept.append(e)
        g2.edges = kept
        g2.inputs = [fused_id if p in member_set else p for p in g2.inputs]
        g2.outputs = [fused_id if p in member_set else p for p in g2.outputs]
        report.nodes_removed += len(chain)
        report.nodes_added += 1
        report.notes.append(f"fused {chain} on {plan[chain[0]]}")
        nmap = g2.node_map()
    return g2, report


PASSES = {
    "split_llm": split_llm,
    "split_tool": split_tool,
    "fuse_colocated": fuse_colocated,
}
