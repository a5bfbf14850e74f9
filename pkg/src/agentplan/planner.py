"""Graph placement planning and the cost-per-token sweep over device pairs.

plan_graph lowers a task graph into a discrete assignment problem (service
times from the analytic performance model or a measured profile, transfer
terms from catalog bandwidths) and solves it exactly. sweep_pairs ranks
"prefill_class::decode_class" pool pairings by tokens/s/$ against a
homogeneous baseline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    BaselineInfeasible,
    BaselineMissing,
    Infeasible,
    InvalidPlan,
    ModelTooLarge,
    UnknownModel,
)
from .graph import (
    SlaSpec,
    TaskGraph,
    TaskKind,
    critical_path_ms,
    flatten_hierarchy,
    topological_order,
    unroll_cycles,
    validate_graph,
)
from .dsl import split_llm, split_tool
from .hardware import CostModelParams, DeviceClass, HardwareCatalog, hourly_cost
from .optimizer import AssignmentProblem, SolveOptions, solve_discrete
from .perf import (
    ParallelismConfig,
    WorkloadShape,
    decode_time_ms,
    kv_cache_bytes,
    max_batch,
    peak_egress_gbps,
    prefill_time_ms,
)

PLAN_SCHEMA = "plan/v1"
FIXED_HOP_MS = 0.1  # per cross-class transfer, on top of serialization time


@dataclass
class PlacementPlan:
    graph_name: str
    label: str                       # "prefill_class::decode_class"
    assignments: dict = field(default_factory=dict)   # task -> placement dict
    transfers: list = field(default_factory=list)     # src/dst/bytes/ms dicts
    predicted: dict = field(default_factory=dict)     # ttft/tbt/e2e/tps/$ per 1M
    cost_usd: float = 0.0            # per request, before slack penalty
    slack_penalty_usd: float = 0.0
    objective_usd: float = 0.0
    sla: dict = field(default_factory=dict)
    schema: str = PLAN_SCHEMA

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "graph_name": self.graph_name,
            "label": self.label,
            "assignments": self.assignments,
            "transfers": self.transfers,
            "predicted": self.predicted,
            "cost_usd": self.cost_usd,
            "slack_penalty_usd": self.slack_penalty_usd,
            "objective_usd": self.objective_usd,
            "sla": self.sla,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "PlacementPlan":
        if d.get("schema") != PLAN_SCHEMA:
            raise InvalidPlan(f"unsupported plan schema {d.get('schema')!r}")
        return cls(
            graph_name=d.get("graph_name", "g"),
            label=d.get("label", ""),
            assignments=d.get("assignments", {}),
            transfers=d.get("transfers", []),
            predicted=d.get("predicted", {}),
            cost_usd=d.get("cost_usd", 0.0),
            slack_penalty_usd=d.get("slack_penalty_usd", 0.0),
            objective_usd=d.get("objective_usd", 0.0),
            sla=d.get("sla", {}),
        )


def _sla_to_json(sla: SlaSpec) -> dict:
    return {
        "mode": sla.mode,
        "ttft_ms": sla.ttft_ms,
        "tbt_ms": sla.tbt_ms,
        "e2e_ms": sla.e2e_ms,
        "min_throughput": sla.min_throughput,
        "lambda_per_ms": None if math.isinf(sla.lambda_per_ms) else sla.lambda_per_ms,
        "scope": sla.scope,
    }


def _usd_per_ms(device: DeviceClass, params: CostModelParams) -> float:
    return hourly_cost(device, params) / 3.6e6


def _estimate_task(node, device: DeviceClass, models: dict, params: CostModelParams,
                   mfu: float, mem_stream_eff: float) -> tuple:
    """(service_ms, cost_usd) for one task on one device class at batch 1.
    Raises ModelTooLarge when the weights do not fit."""
    if node.kind is TaskKind.PREFILL:
        spec = _model_of(node, models)
        shape = WorkloadShape(int(node.payload["in_tokens"]), 0)
        est = prefill_time_ms(spec, shape, device, mfu=mfu,
                              static_latency_ms=node.static_latency_ms)
        t = est.ttft_ms
    elif node.kind is TaskKind.DECODE:
        spec = _model_of(node, models)
        osl = int(node.payload["out_tokens"])
        shape = WorkloadShape(int(node.payload["in_tokens"]), osl)
        est = decode_time_ms(spec, shape, device, mfu=mfu,
                             mem_stream_eff=mem_stream_eff)
        t = node.static_latency_ms + est.tbt_ms * osl
    else:
        # non-LLM work: authored latency plus general compute at one unit/ms
        t = node.static_latency_ms + node.demand.gp_compute_units
    return t, t * _usd_per_ms(device, params)


def _model_of(node, models: dict):
    name = node.payload.get("model")
    if name not in models:
        raise UnknownModel(f"task {node.id!r}: model {name!r} not available")
    return models[name]


def prepare_graph(g: TaskGraph, models: dict) -> TaskGraph:
    """Flatten agents, split LLM and tool nodes, unroll annotated cycles."""
    g = flatten_hierarchy(g)
    if any(n.kind is TaskKind.MODEL_EXEC for n in g.nodes):
        g, _ = split_llm(g, models)
    if any(n.kind is TaskKind.TOOL_CALL for n in g.nodes):
        g, _ = split_tool(g)
    g = unroll_cycles(g)
    diags = validate_graph(g)
    if diags:
        raise InvalidPlan("; ".join(f"{d.code}: {d.message}" for d in diags))
    return g


def build_problem(g: TaskGraph, catalog: HardwareCatalog, models: dict,
                  sla: SlaSpec, profile: Optional[dict] = None,
                  mfu: float = 0.5, mem_stream_eff: float = 0.9) -> AssignmentProblem:
    """Encode a prepared (acyclic, split) graph as a discrete assignment
    problem. Each task contributes an exec-time resource (rate 1 per ms,
    free) and a unit resource carrying its dollar cost, so per-(task, class)
    profiled costs fit the linear cost model unchanged. A profile dict
    overrides estimates: {"tasks": {id: {class: {latency_ms, cost_usd}}},
    "edges": {"src->dst": {class: {class: [ms, usd]}}}}; profiled tasks are
    restricted to their listed classes."""
    profile = profile or {}
    tasks = topological_order(g)
    classes = catalog.names()
    nmap = g.node_map()

    theta: dict = {}
    unit_cost: dict = {j: {} for j in classes}
    perf: dict = {j: {} for j in classes}
    for i in tasks:
        node = nmap[i]
        prof = profile.get("tasks", {}).get(i)
        theta[i] = {}
        for j in classes:
            if prof is not None:
                if j not in prof:
                    continue
                t = float(prof[j]["latency_ms"])
                cost = float(prof[j].get("cost_usd", 0.0))
            else:
                try:
                    t, cost = _estimate_task(node, catalog[j], models,
                                             catalog.cost_params, mfu, mem_stream_eff)
                except ModelTooLarge:
                    continue
            theta[i][j] = {f"{i}/exec": t, f"{i}/unit": 1.0}
            unit_cost[j][f"{i}/unit"] = cost
        if not theta[i]:
            raise Infeasible(f"task {i!r}: no device class fits "
                             f"(memory capacity is the binding constraint)")
    resources = []
    for i in tasks:
        resources += [f"{i}/exec", f"{i}/unit"]
        for j in classes:
            perf[j][f"{i}/exec"] = 1.0
            perf[j][f"{i}/unit"] = math.inf

    edges = []
    edge_comm: dict = {}
    for e in g.edges:
        key = (e.src, e.dst)
        edges.append(key)
        prof_edge = profile.get("edges", {}).get(f"{e.src}->{e.dst}")
        table: dict = {}
        for j in classes:
            table[j] = {}
            for jp in classes:
                if prof_edge is not None:
                    ms, usd = prof_edge.get(j, {}).get(jp, (0.0, 0.0))
                elif j == jp:
                    ms, usd = 0.0, 0.0
                else:
                    link = min(catalog[j].scaleout_bw_gbps_bits,
                               catalog[jp].scaleout_bw_gbps_bits)
                    ms = e.transfer_bytes * 8.0 / (link * 1e9) * 1e3 + FIXED_HOP_MS
                    usd = 0.0
                table[j][jp] = (float(ms), float(usd))
        edge_comm[key] = table

    eff_sla = sla
    if sla.mode == "throughput":
        eff_sla = SlaSpec(mode="throughput", min_throughput=sla.min_throughput,
                          lambda_per_ms=sla.lambda_per_ms, scope=sla.scope)
    return AssignmentProblem(
        tasks=tasks, classes=classes, resources=resources,
        theta=theta, perf=perf, unit_cost=unit_cost,
        sla=eff_sla, mode="discrete", edges=edges, edge_comm=edge_comm,
    )


def plan_graph(g: TaskGraph, catalog: HardwareCatalog, models: dict, sla: SlaSpec,
               profile: Optional[dict] = None, mfu: float = 0.5,
               mem_stream_eff: float = 0.9,
               opts: Optional[SolveOptions] = None) -> PlacementPlan:
    """Assign every task of g to a device class minimizing dollar cost under
    the SLA, and package service times and transfer latencies for the
    simulator."""
    g = prepare_graph(g, models)
    if not g.nodes:
        return PlacementPlan(graph_name=g.name, label="", sla=_sla_to_json(sla))
    p = build_problem(g, catalog, models, sla, profile=profile,
                      mfu=mfu, mem_stream_eff=mem_stream_eff)
    a = solve_discrete(p, opts)
    cls_of = a.classes_of()
    nmap = g.node_map()

    assignments = {}
    cost_usd = 0.0
    for i in p.tasks:
        j = cls_of[i]
        t = a.per_task_ms[i]
        c = p.unit_cost[j][f"{i}/unit"]
        cost_usd += c
        node = nmap[i]
        entry = {
            "device_class": j,
            "kind": node.kind.value,
            "service_ms": t,
            "cost_usd": c,
            "tp": 1, "pp": 1, "replicas": 1,
        }
        if node.kind is TaskKind.DECODE:
            osl = int(node.payload.get("out_tokens", 0))
            entry["out_tokens"] = osl
            entry["tbt_ms"] = t / osl if osl else t
        assignments[i] = entry

    transfers = []
    edge_times = {}
    for e in g.edges:
        ms, usd = p.edge_term((e.src, e.dst), cls_of[e.src], cls_of[e.dst])
        cost_usd += usd
        edge_times[(e.src, e.dst)] = ms
        # every edge ships with the plan, zero-latency ones included: the
        # simulator rebuilds the dependency graph from this list alone
        transfers.append({"src": e.src, "dst": e.dst,
                          "bytes": e.transfer_bytes, "ms": ms})

    node_times = {i: a.per_task_ms[i] for i in p.tasks}
    e2e = critical_path_ms(g, node_times, edge_times)
    starts = _start_times(g, node_times, edge_times)
    decode_tasks = [i for i in p.tasks if nmap[i].kind is TaskKind.DECODE]
    if decode_tasks:
        ttft = min(starts[i] + assignments[i]["tbt_ms"] for i in decode_tasks)
        tbt = max(assignments[i]["tbt_ms"] for i in decode_tasks)
        out_tokens = sum(assignments[i]["out_tokens"] for i in decode_tasks)
    else:
        ttft, tbt, out_tokens = e2e, 0.0, 0
    tps = out_tokens / (e2e / 1e3) if e2e > 0 and out_tokens else 0.0
    per_1m = cost_usd / out_tokens * 1e6 if out_tokens else 0.0

    slack_penalty = a.objective - cost_usd
    prefill_tasks = [i for i in p.tasks if nmap[i].kind is TaskKind.PREFILL]
    left = cls_of[prefill_tasks[0]] if prefill_tasks else cls_of[p.tasks[0]]
    right = cls_of[decode_tasks[0]] if decode_tasks else left
    return PlacementPlan(
        graph_name=g.name,
        label=f"{left}::{right}",
        assignments=assignments,
        transfers=transfers,
        predicted={
            "ttft_ms": ttft, "tbt_ms": tbt, "e2e_ms": e2e,
            "tokens_per_sec": tps, "cost_per_1m_tokens": per_1m,
        },
        cost_usd=cost_usd,
        slack_penalty_usd=slack_penalty,
        objective_usd=a.objective,
        sla=_sla_to_json(sla),
    )


def _start_times(g: TaskGraph, node_times: dict, edge_times: dict) -> dict:
    starts = {i: 0.0 for i in node_times}
    for i in topological_order(g):
        for e in g.edges:
            if e.src == i:
                done = starts[i] + node_times[i] + edge_times.get((e.src, e.dst), 0.0)
                starts[e.dst] = max(starts[e.dst], done)
    return starts


# --- device-pair TCO sweep ------------------------------------------------------


@dataclass
class StageConfig:
    device: str
    tp: int
    pp: int
    batch: int
    time_ms: float               # ttft for prefill, per-token tbt for decode
    rate_per_sec: float          # requests/s of one replica
    hourly_cost: float           # $/hr of one replica (all its devices)


@dataclass
class TcoRow:
    label: str
    model: str
    precision: str
    isl: int
    osl: int
    sla_mode: str
    tokens_per_sec_per_dollar: float = 0.0
    cost_per_token_usd: float = 0.0
    tco_ratio_vs_baseline: Optional[float] = None
    feasible: bool = False
    binding_constraint: str = ""
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "model": self.model,
            "precision": self.precision,
            "isl": self.isl,
            "osl": self.osl,
            "sla_mode": self.sla_mode,
            "tokens_per_sec_per_dollar": self.tokens_per_sec_per_dollar,
            "cost_per_token_usd": self.cost_per_token_usd,
            "tco_ratio_vs_baseline": self.tco_ratio_vs_baseline,
            "feasible": self.feasible,
            "binding_constraint": self.binding_constraint,
            "detail": self.detail,
        }


def _batch_candidates(cap: int) -> list:
    base = []
    b = 1
    while b <= cap:
        base.append(b)
        b *= 2
    out = set(base)
    for b in base:  # +/-25% local refinement around each coarse point
        out.add(max(1, round(b * 0.75)))
        out.add(min(cap, round(b * 1.25)))
    return sorted(out)


def _best_stage_config(stage: str, m, shape: WorkloadShape, device: DeviceClass,
                       sla: SlaSpec, params: CostModelParams,
                       mfu: float, mem_stream_eff: float) -> tuple:
    """Best (rate per dollar) replica configuration of one stage on one
    device class, or (None, binding_constraint)."""
    best: Optional[StageConfig] = None
    best_score = -1.0
    binding = "memory"
    for tp in (1, 2, 4, 8):
        if tp > device.max_per_chassis:
            continue
        for pp in (1, 2):
            par = ParallelismConfig(tp_degree=tp, pp_degree=pp)
            cap = max_batch(m, shape, device, par)
            if cap < 1:
                continue
            hr = hourly_cost(device, params) * par.devices
            for bs in _batch_candidates(cap):
                sh = WorkloadShape(shape.isl_tokens, shape.osl_tokens, bs)
                try:
                    if stage == "prefill":
                        est = prefill_time_ms(m, sh, device, par, mfu=mfu)
                        t = est.ttft_ms
                        ok = sla.mode != "latency" or sla.ttft_ms is None or t <= sla.ttft_ms
                        which = "ttft"
                        rate = bs / (t / 1e3)
                    else:
                        est = decode_time_ms(m, sh, device, par, mfu=mfu,
                                             mem_stream_eff=mem_stream_eff)
                        t = est.tbt_ms
                        ok = sla.mode != "latency" or sla.tbt_ms is None or t <= sla.tbt_ms
                        which = "tbt"
                        rate = est.tokens_per_sec / max(1, shape.osl_tokens)
                except ModelTooLarge:
                    break
                if not ok:
                    binding = which
                    continue
                score = rate / hr
                if score > best_score:
                    best_score = score
                    best = StageConfig(device.name, tp, pp, bs, t, rate, hr)
    return best, ("" if best else binding)


def _rate_match(rp: float, rd: float, max_replicas: int = 64) -> tuple:
    """Smallest replica counts whose pool rates agree within 10%."""
    fallback = (1, 1)
    fallback_gap = math.inf
    for n_p in range(1, max_replicas + 1):
        ideal = n_p * rp / rd
        for n_d in sorted({max(1, math.floor(ideal)), max(1, round(ideal)),
                           math.ceil(ideal)}):
            if n_d > max_replicas:
                continue
            hi = max(n_p * rp, n_d * rd)
            gap = (hi - min(n_p * rp, n_d * rd)) / hi
            if gap <= 0.10:
                return n_p, n_d
            if gap < fallback_gap:
                fallback, fallback_gap = (n_p, n_d), gap
    return fallback


def sweep_pairs(model, shape: WorkloadShape, catalog: HardwareCatalog, sla: SlaSpec,
                baseline: str, pairs: Optional[list] = None, mfu: float = 0.5,
                mem_stream_eff: float = 0.9, max_replicas: int = 64) -> list:
    """Rank prefill::decode device-class pairings by tokens/s/$.

    Per stage and class, the best (tp, pp, batch) is chosen independently;
    pool sizes are the smallest replica counts rate-matched within 10%.
    Cost-per-token = total pool $/hr / (3600 * system tokens/s)."""
    if "::" not in baseline:
        raise BaselineInfeasible(f"baseline label {baseline!r} needs '::'")
    b_pre, b_dec = baseline.split("::", 1)
    if b_pre not in catalog or b_dec not in catalog:
        raise BaselineInfeasible(f"baseline classes of {baseline!r} not in catalog")

    if pairs is None:
        pairs = [(jp, jd) for jp in catalog.names() for jd in catalog.names()]
    else:
        pairs = [tuple(p.split("::", 1)) if isinstance(p, str) else tuple(p)
                 for p in pairs]
    if (b_pre, b_dec) not in pairs:
        pairs = pairs + [(b_pre, b_dec)]

    params = catalog.cost_params
    pre_best: dict = {}
    dec_best: dict = {}
    for j in {a for a, _ in pairs}:
        pre_best[j] = _best_stage_config("prefill", model, shape, catalog[j],
                                         sla, params, mfu, mem_stream_eff)
    for j in {b for _, b in pairs}:
        dec_best[j] = _best_stage_config("decode", model, shape, catalog[j],
                                         sla, params, mfu, mem_stream_eff)

    rows = []
    for jp, jd in pairs:
        label = f"{jp}::{jd}"
        row = TcoRow(label=label, model=model.name, precision=model.precision,
                     isl=shape.isl_tokens, osl=shape.osl_tokens, sla_mode=sla.mode)
        pre, pre_bind = pre_best[jp]
        dec, dec_bind = dec_best[jd]
        if pre is None or dec is None:
            row.binding_constraint = pre_bind or dec_bind
            rows.append(row)
            continue
        if jp != jd:
            kv = kv_cache_bytes(model, shape.isl_tokens, pre.batch)
            egress = peak_egress_gbps(kv, pre.time_ms, pre.tp * pre.pp)
            if egress > catalog[jp].scaleout_bw_gbps_bits:
                row.binding_constraint = "network"
                row.detail = {"peak_egress_gbps": egress}
                rows.append(row)
                continue
        n_p, n_d = _rate_match(pre.rate_per_sec, dec.rate_per_sec, max_replicas)
        tps = min(n_p * pre.rate_per_sec, n_d * dec.rate_per_sec) * shape.osl_tokens
        pool_hr = n_p * pre.hourly_cost + n_d * dec.hourly_cost
        row.feasible = True
        row.cost_per_token_usd = pool_hr / 3600.0 / tps
        row.tokens_per_sec_per_dollar = tps / pool_hr
        row.detail = {
            "prefill": {"tp": pre.tp, "pp": pre.pp, "batch": pre.batch,
                        "ttft_ms": pre.time_ms, "replicas": n_p},
            "decode": {"tp": dec.tp, "pp": dec.pp, "batch": dec.batch,
                       "tbt_ms": dec.time_ms, "replicas": n_d},
            "system_tokens_per_sec": tps,
            "pool_usd_per_hr": pool_hr,
        }
        rows.append(row)

    rows = normalize_vs_baseline(rows, baseline)
    if not any(r.label == baseline and r.feasible for r in rows):
        raise BaselineInfeasible(f"baseline {baseline} has no feasible config")
    rows.sort(key=lambda r: (not r.feasible, -r.tokens_per_sec_per_dollar, r.label))
    return rows


def normalize_vs_baseline(rows: list, baseline_label: str) -> list:
    base = next((r for r in rows if r.label == baseline_label), None)
    if base is None:
        raise BaselineMissing(f"no row labeled {baseline_label!r}")
    for r in rows:
        if not r.feasible or not base.feasible:
            r.tco_ratio_vs_baseline = None
        elif r is base:
            r.tco_ratio_vs_baseline = 1.0
        else:
            r.tco_ratio_vs_baseline = base.cost_per_token_usd / r.cost_per_token_usd
    return rows
