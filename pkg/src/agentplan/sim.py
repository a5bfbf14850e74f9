"""Discrete-event validation of placement plans.

Each planned task is a FIFO server with the plan's analytic service time;
each transfer edge is a FIFO link serialized at its planned latency.
Everything is driven off one event heap with a total order on
(time, kind, request, node, sequence), so identical inputs replay identically.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .errors import InvalidPlan, ZeroDuration
from .planner import PlacementPlan

_KIND_ORDER = {
    "request_arrival": 0,
    "transfer_end": 1,
    "task_end": 2,
}


@dataclass(frozen=True)
class SimEvent:
    time_ms: float
    kind: str
    request_id: int
    node_id: str = ""

    def sort_key(self) -> tuple:
        return (self.time_ms, _KIND_ORDER[self.kind], self.request_id, self.node_id)


@dataclass
class SimReport:
    duration_ms: float
    admitted: int
    completed: int
    in_flight: int
    requests: list = field(default_factory=list)     # id/arrival/ttft/e2e dicts
    device_utilization: dict = field(default_factory=dict)   # task -> fraction
    link_utilization: dict = field(default_factory=dict)     # "src->dst" -> fraction
    queue_waits: dict = field(default_factory=dict)  # task -> count/total/max ms
    throughput_tokens_per_sec: float = 0.0
    requests_per_sec: float = 0.0

    def to_json(self) -> dict:
        return {
            "schema": "sim/v1",
            "duration_ms": self.duration_ms,
            "admitted": self.admitted,
            "completed": self.completed,
            "in_flight": self.in_flight,
            "requests": self.requests,
            "device_utilization": self.device_utilization,
            "link_utilization": self.link_utilization,
            "queue_waits": self.queue_waits,
            "throughput_tokens_per_sec": self.throughput_tokens_per_sec,
            "requests_per_sec": self.requests_per_sec,
        }


def _arrival_times(workload: str, duration_ms: float, seed: int) -> list:
    """'interval:X' (one request every X ms, starting at 0) or
    'poisson:R' (R requests/s, exponential gaps from the seed)."""
    kind, _, arg = workload.partition(":")
    times = []
    if kind == "interval":
        step = float(arg)
        if step <= 0:
            raise InvalidPlan(f"interval must be > 0, got {arg!r}")
        t = 0.0
        while t < duration_ms:
            times.append(t)
            t += step
    elif kind == "poisson":
        rate_per_ms = float(arg) / 1e3
        if rate_per_ms <= 0:
            raise InvalidPlan(f"poisson rate must be > 0, got {arg!r}")
        rng = random.Random(seed)
        t = rng.expovariate(rate_per_ms)
        while t < duration_ms:
            times.append(t)
            t += rng.expovariate(rate_per_ms)
    else:
        raise InvalidPlan(f"unknown workload spec {workload!r}")
    return times


class _Fifo:
    """Single server: work starts at max(ready, previous completion)."""

    __slots__ = ("free_at", "busy_ms")

    def __init__(self):
        self.free_at = 0.0
        self.busy_ms = 0.0

    def serve(self, ready_ms: float, service_ms: float) -> tuple:
        start = max(ready_ms, self.free_at)
        end = start + service_ms
        self.free_at = end
        self.busy_ms += service_ms
        return start, end


def simulate_plan(plan: PlacementPlan, workload: str, duration_ms: float,
                  seed: int = 0) -> SimReport:
    """Run the plan's task graph against an arrival stream and report
    latencies, utilization, queue waits, and throughput. Arrivals after
    duration_ms are not admitted; admitted requests run to completion."""
    if duration_ms <= 0:
        raise ZeroDuration(f"duration_ms must be > 0, got {duration_ms}")
    tasks = plan.assignments
    for i, a in tasks.items():
        if a.get("service_ms") is None or a["service_ms"] < 0:
            raise InvalidPlan(f"task {i!r} has no valid service_ms")
    for tr in plan.transfers:
        if tr["src"] not in tasks or tr["dst"] not in tasks:
            raise InvalidPlan(
                f"transfer {tr['src']}->{tr['dst']} references unknown task")

    # the transfer list is the complete edge set of the planned graph
    edges = {(tr["src"], tr["dst"]): float(tr["ms"]) for tr in plan.transfers}
    succ: dict = {i: [] for i in tasks}
    n_preds: dict = {i: 0 for i in tasks}
    for (s, d) in edges:
        succ[s].append(d)
        n_preds[d] += 1
    roots = [i for i in tasks if n_preds[i] == 0]
    sinks = [i for i in tasks if not succ[i]]
    decode_tasks = [i for i, a in tasks.items() if a.get("kind") == "decode"]
    tokens_per_request = sum(tasks[i].get("out_tokens", 0) for i in decode_tasks)

    servers = {i: _Fifo() for i in tasks}
    links = {e: _Fifo() for e in edges}
    arrivals = _arrival_times(workload, duration_ms, seed)

    heap: list = []
    seq = 0

    def push(t, kind, rid, node):
        nonlocal seq
        heapq.heappush(heap, (t, _KIND_ORDER[kind], rid, node, seq))
        seq += 1

    for rid, t in enumerate(arrivals):
        push(t, "request_arrival", rid, "")

    waiting = {rid: dict(n_preds) for rid in range(len(arrivals))}
    sinks_left = {rid: len(sinks) for rid in range(len(arrivals))}
    req_info = [{"id": rid, "arrival_ms": t, "ttft_ms": None, "e2e_ms": None}
                for rid, t in enumerate(arrivals)]
    queue_waits = {i: {"count": 0, "total_ms": 0.0, "max_ms": 0.0} for i in tasks}
    completed = 0
    horizon = 0.0

    def start_task(rid, node, ready):
        start, end = servers[node].serve(ready, tasks[node]["service_ms"])
        wait = start - ready
        qw = queue_waits[node]
        qw["count"] += 1
        qw["total_ms"] += wait
        qw["max_ms"] = max(qw["max_ms"], wait)
        if tasks[node].get("kind") == "decode":
            info = req_info[rid]
            first = start + tasks[node].get("tbt_ms", tasks[node]["service_ms"])
            ttft = first - info["arrival_ms"]
            if info["ttft_ms"] is None or ttft < info["ttft_ms"]:
                info["ttft_ms"] = ttft
        push(end, "task_end", rid, node)

    while heap:
        t, order, rid, node, _ = heapq.heappop(heap)
        horizon = max(horizon, t)
        if order == _KIND_ORDER["request_arrival"]:
            for r in roots:
                start_task(rid, r, t)
            if not tasks:  # empty plan: request completes on arrival
                completed += 1
        elif order == _KIND_ORDER["task_end"]:
            if not succ[node]:
                sinks_left[rid] -= 1
                if sinks_left[rid] == 0:
                    info = req_info[rid]
                    info["e2e_ms"] = t - info["arrival_ms"]
                    if info["ttft_ms"] is None:
                        info["ttft_ms"] = info["e2e_ms"]
                    completed += 1
            for d in succ[node]:
                edge = (node, d)
                ms = edges[edge]
                if ms > 0:
                    _, arrive = links[edge].serve(t, ms)
                    push(arrive, "transfer_end", rid, d)
                else:
                    push(t, "transfer_end", rid, d)
        else:  # transfer_end: one predecessor of `node` satisfied
            waiting[rid][node] -= 1
            if waiting[rid][node] == 0:
                start_task(rid, node, t)

    elapsed = max(horizon, duration_ms)
    util = {i: servers[i].busy_ms / elapsed for i in tasks}
    link_util = {f"{s}->{d}": links[(s, d)].busy_ms / elapsed for s, d in edges}
    out_tokens = completed * tokens_per_request
    return SimReport(
        duration_ms=duration_ms,
        admitted=len(arrivals),
        completed=completed,
        in_flight=len(arrivals) - completed,
        requests=[r for r in req_info if r["e2e_ms"] is not None],
        device_utilization=util,
        link_utilization=link_util,
        queue_waits=queue_waits,
        throughput_tokens_per_sec=out_tokens / (elapsed / 1e3) if elapsed else 0.0,
        requests_per_sec=completed / (elapsed / 1e3) if elapsed else 0.0,
    )


def compare_to_analytic(report: SimReport, plan: PlacementPlan,
                        latency_tol: float = 0.01,
                        throughput_tol: float = 0.05) -> dict:
    """Relative deviation of simulated latencies/throughput from the plan's
    analytic predictions. Latency deviations are meaningful under a
    no-contention workload; throughput is compared against the bottleneck
    stage rate 1/max(service time)."""
    out = {"flags": []}
    if report.requests:
        mean_e2e = sum(r["e2e_ms"] for r in report.requests) / len(report.requests)
        mean_ttft = sum(r["ttft_ms"] for r in report.requests) / len(report.requests)
        pred_e2e = plan.predicted.get("e2e_ms") or 0.0
        pred_ttft = plan.predicted.get("ttft_ms") or 0.0
        if pred_e2e:
            out["e2e_deviation"] = abs(mean_e2e - pred_e2e) / pred_e2e
            if out["e2e_deviation"] > latency_tol:
                out["flags"].append("e2e")
        if pred_ttft:
            out["ttft_deviation"] = abs(mean_ttft - pred_ttft) / pred_ttft
            if out["ttft_deviation"] > latency_tol:
                out["flags"].append("ttft")
    services = [a["service_ms"] for a in plan.assignments.values()]
    if services and max(services) > 0:
        bottleneck_rps = 1e3 / max(services)
        out["bottleneck_requests_per_sec"] = bottleneck_rps
        out["throughput_deviation"] = (
            abs(report.requests_per_sec - bottleneck_rps) / bottleneck_rps)
        if out["throughput_deviation"] > throughput_tol:
            out["flags"].append("throughput")
    return out
