"""Task-to-hardware assignment: LP relaxation and exact discrete search.

The fractional form keeps the model linear (per-pair constant communication
term d). The discrete form adds a pairwise edge-communication table (cost
and latency depend on both endpoints' classes, zero when co-located) and is
solved exactly by depth-first branch-and-bound with an admissible bound,
cross-checked by a brute-force enumeration oracle.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    BudgetExceeded,
    Infeasible,
    NonlinearConstraint,
    ShapeMismatch,
    TooLarge,
    ZeroPerf,
)
from .graph import SlaSpec
from .simplex import LpStandardForm, solve as simplex_solve

INF = math.inf


@dataclass
class AssignmentProblem:
    tasks: list
    classes: list
    resources: list
    theta: dict                     # theta[i][j][r] -> demand
    perf: dict                      # perf[j][r] -> rate (units of r per ms)
    unit_cost: dict                 # c[j][r] -> $ per unit of r
    cap: dict = field(default_factory=dict)            # cap[j][r], absent = unlimited
    static_latency: dict = field(default_factory=dict)  # l[i] ms
    pipeline_cost: dict = field(default_factory=dict)   # d[i][j] ms
    sync_cost: dict = field(default_factory=dict)       # delta[i][j] ms
    gamma: float = 1.0              # $ per ms of pipeline cost
    sla: SlaSpec = field(default_factory=lambda: SlaSpec(mode="throughput"))
    mode: str = "discrete"          # fractional | discrete
    edges: list = field(default_factory=list)            # (src_task, dst_task)
    edge_comm: dict = field(default_factory=dict)        # [(i,k)][j][jp] -> (ms, $)

    def allowed(self, i: str) -> list:
        return [j for j in self.classes if j in self.theta.get(i, {})]

    def l(self, i: str) -> float:
        return self.static_latency.get(i, 0.0)

    def d(self, i: str, j: str) -> float:
        return self.pipeline_cost.get(i, {}).get(j, 0.0)

    def delta(self, i: str, j: str) -> float:
        return self.sync_cost.get(i, {}).get(j, 0.0)

    def edge_term(self, edge: tuple, j: str, jp: str) -> tuple:
        table = self.edge_comm.get(edge)
        if not table:
            return (0.0, 0.0)
        ms, usd = table.get(j, {}).get(jp, (0.0, 0.0))
        return (float(ms), float(usd))

    def has_edge_comm(self) -> bool:
        return any(
            ms or usd
            for table in self.edge_comm.values()
            for row in table.values()
            for ms, usd in row.values()
        )

    def to_json(self) -> dict:
        return {
            "tasks": self.tasks,
            "classes": self.classes,
            "resources": self.resources,
            "theta": self.theta,
            "perf": self.perf,
            "unit_cost": self.unit_cost,
            "cap": self.cap,
            "static_latency": self.static_latency,
            "pipeline_cost": self.pipeline_cost,
            "sync_cost": self.sync_cost,
            "gamma": self.gamma,
            "sla": {
                "mode": self.sla.mode,
                "ttft_ms": self.sla.ttft_ms,
                "tbt_ms": self.sla.tbt_ms,
                "e2e_ms": self.sla.e2e_ms,
                "min_throughput": self.sla.min_throughput,
                "lambda_per_ms": (None if math.isinf(self.sla.lambda_per_ms)
                                  else self.sla.lambda_per_ms),
                "scope": self.sla.scope,
            },
            "mode": self.mode,
            "edges": [list(e) for e in self.edges],
            "edge_comm": {
                f"{i}->{k}": {j: {jp: list(v) for jp, v in row.items()}
                              for j, row in table.items()}
                for (i, k), table in self.edge_comm.items()
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "AssignmentProblem":
        sla_d = dict(d.get("sla", {}))
        lam = sla_d.pop("lambda_per_ms", None)
        sla = SlaSpec(lambda_per_ms=INF if lam is None else lam, **sla_d)
        edge_comm = {}
        for key, table in d.get("edge_comm", {}).items():
            i, k = key.split("->", 1)
            edge_comm[(i, k)] = {
                j: {jp: tuple(v) for jp, v in row.items()} for j, row in table.items()
            }
        return cls(
            tasks=d["tasks"],
            classes=d["classes"],
            resources=d.get("resources", []),
            theta=d["theta"],
            perf=d["perf"],
            unit_cost=d["unit_cost"],
            cap=d.get("cap", {}),
            static_latency=d.get("static_latency", {}),
            pipeline_cost=d.get("pipeline_cost", {}),
            sync_cost=d.get("sync_cost", {}),
            gamma=d.get("gamma", 1.0),
            sla=sla,
            mode=d.get("mode", "discrete"),
            edges=[tuple(e) for e in d.get("edges", [])],
            edge_comm=edge_comm,
        )


@dataclass
class Assignment:
    x: dict                      # x[i][j] -> fraction
    slack: dict = field(default_factory=dict)
    objective: float = 0.0
    per_task_ms: dict = field(default_factory=dict)
    feasible: bool = True
    stats: dict = field(default_factory=dict)

    def classes_of(self) -> dict:
        """Integral view: task -> its class. ShapeMismatch when fractional."""
        out = {}
        for i, row in self.x.items():
            picks = [j for j, v in row.items() if v > 0.5]
            if len(picks) != 1:
                raise ShapeMismatch(f"task {i!r} is fractionally assigned")
            out[i] = picks[0]
        return out

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "slack": self.slack,
            "objective": self.objective,
            "per_task_ms": self.per_task_ms,
            "feasible": self.feasible,
            "stats": self.stats,
        }


@dataclass
class SolveOptions:
    max_nodes: int = 1_000_000
    enumerate_limit: int = 1_000_000


@dataclass
class EvalResult:
    cost: float             # node + edge communication cost, no penalty
    per_task_ms: dict
    e2e_ms: float
    slack_penalty: float
    objective: float


def compute_tij(p: AssignmentProblem, i: str, j: str) -> float:
    """Roofline max over resources plus static, pipeline, and sync terms."""
    worst = 0.0
    for r, th in p.theta[i][j].items():
        if th == 0:
            continue
        pf = p.perf.get(j, {}).get(r, 0.0)
        if pf == 0:
            raise ZeroPerf(f"perf[{j}][{r}] = 0 with demand {th}")
        if math.isinf(pf):
            continue
        worst = max(worst, th / pf)
    return worst + p.l(i) + p.d(i, j) + p.delta(i, j)


def node_cost(p: AssignmentProblem, i: str, j: str) -> float:
    c = sum(th * p.unit_cost.get(j, {}).get(r, 0.0)
            for r, th in p.theta[i][j].items())
    return c + p.gamma * p.d(i, j)


def _integral_terms(p: AssignmentProblem, cls_of: dict) -> tuple:
    """(cost, per_task_ms, edge_latency_ms) for a 0/1 assignment."""
    cost = 0.0
    per_task = {}
    for i in p.tasks:
        j = cls_of[i]
        cost += node_cost(p, i, j)
        per_task[i] = compute_tij(p, i, j)
    edge_lat = 0.0
    for e in p.edges:
        ms, usd = p.edge_term(e, cls_of[e[0]], cls_of[e[1]])
        cost += usd
        edge_lat += ms
    return cost, per_task, edge_lat


def _slack_terms(p: AssignmentProblem, per_task: dict, edge_lat: float) -> tuple:
    """(e2e_ms, slack_sum). Slack is the SLA overshoot under the problem scope."""
    t_sla = p.sla.e2e_ms
    total = sum(per_task.values()) + edge_lat
    if t_sla is None:
        return total, 0.0
    if p.sla.scope == "end_to_end":
        return total, max(0.0, total - t_sla)
    return total, sum(max(0.0, t - t_sla) for t in per_task.values())


def _capacity_ok(p: AssignmentProblem, cls_of: dict) -> bool:
    usage: dict = {}
    for i, j in cls_of.items():
        for r, th in p.theta[i][j].items():
            usage[(j, r)] = usage.get((j, r), 0.0) + th
    for (j, r), used in usage.items():
        if used > p.cap.get(j, {}).get(r, INF) + 1e-9:
            return False
    return True


def _throughput_ok(p: AssignmentProblem, per_task: dict) -> bool:
    r = p.sla.min_throughput
    if r is None:
        return True
    total = 0.0
    for t in per_task.values():
        if t <= 0:
            return True  # a zero-latency task makes the sum unbounded
        total += 1.0 / t
    return total >= r


def _objective_integral(p: AssignmentProblem, cls_of: dict) -> Optional[EvalResult]:
    """Objective for a 0/1 assignment, or None when infeasible (hard SLA,
    capacity, or throughput floor violated)."""
    if not _capacity_ok(p, cls_of):
        return None
    cost, per_task, edge_lat = _integral_terms(p, cls_of)
    e2e, slack = _slack_terms(p, per_task, edge_lat)
    lam = p.sla.lambda_per_ms
    if slack > 0 and math.isinf(lam):
        return None
    if not _throughput_ok(p, per_task):
        return None
    penalty = lam * slack if slack > 0 else 0.0
    return EvalResult(cost, per_task, e2e, penalty, cost + penalty)


def evaluate_assignment(p: AssignmentProblem, a: Assignment) -> EvalResult:
    """Cost, per-task latency, and slack penalty of a given assignment.
    Integral assignments include the pairwise edge-communication terms;
    fractional ones use the linear model only."""
    for i in p.tasks:
        row = a.x.get(i)
        if row is None:
            raise ShapeMismatch(f"assignment missing task {i!r}")
        if abs(sum(row.values()) - 1.0) > 1e-6:
            raise ShapeMismatch(f"task {i!r}: assignment fractions sum != 1")
    integral = all(
        all(v < 1e-9 or v > 1 - 1e-9 for v in a.x[i].values()) for i in p.tasks
    )
    if integral:
        cls_of = {i: max(a.x[i], key=a.x[i].get) for i in p.tasks}
        cost, per_task, edge_lat = _integral_terms(p, cls_of)
    else:
        cost = 0.0
        per_task = {}
        for i in p.tasks:
            per_task[i] = sum(v * compute_tij(p, i, j)
                              for j, v in a.x[i].items() if v > 0)
            cost += sum(v * node_cost(p, i, j) for j, v in a.x[i].items() if v > 0)
        edge_lat = 0.0
    e2e, slack = _slack_terms(p, per_task, edge_lat)
    lam = p.sla.lambda_per_ms
    penalty = lam * slack if slack > 0 else 0.0
    return EvalResult(cost, per_task, e2e, penalty, cost + penalty)


# --- LP form ------------------------------------------------------------------


def build_lp(p: AssignmentProblem) -> LpStandardForm:
    """Linear program over fractional x and slack. Pairwise edge terms and
    the throughput floor are nonlinear in x and rejected here."""
    if p.sla.min_throughput is not None:
        raise NonlinearConstraint("throughput floor is nonlinear in fractional x")
    if p.has_edge_comm():
        raise NonlinearConstraint("pairwise edge communication requires discrete mode")

    pairs = [(i, j) for i in p.tasks for j in p.allowed(i)]
    names = [f"x[{i}][{j}]" for i, j in pairs]
    objective = [node_cost(p, i, j) for i, j in pairs]
    upper = [1.0] * len(pairs)

    t_sla = p.sla.e2e_ms
    lam = p.sla.lambda_per_ms
    hard = math.isinf(lam)
    slack_names = []
    if t_sla is not None:
        slack_names = (["s"] if p.sla.scope == "end_to_end"
                       else [f"s[{i}]" for i in p.tasks])
        names += slack_names
        objective += [0.0 if hard else lam] * len(slack_names)
        upper += [0.0 if hard else INF] * len(slack_names)

    n = len(names)
    col = {name: k for k, name in enumerate(names)}
    rows = []
    for i in p.tasks:
        coeffs = [0.0] * n
        for j in p.allowed(i):
            coeffs[col[f"x[{i}][{j}]"]] = 1.0
        rows.append((coeffs, "=", 1.0))

    if t_sla is not None:
        tij = {(i, j): compute_tij(p, i, j) for i, j in pairs}
        if p.sla.scope == "end_to_end":
            coeffs = [0.0] * n
            for (i, j), t in tij.items():
                coeffs[col[f"x[{i}][{j}]"]] = t
            coeffs[col["s"]] = -1.0
            rows.append((coeffs, "<=", t_sla))
        else:
            for i in p.tasks:
                coeffs = [0.0] * n
                for j in p.allowed(i):
                    coeffs[col[f"x[{i}][{j}]"]] = tij[(i, j)]
                coeffs[col[f"s[{i}]"]] = -1.0
                rows.append((coeffs, "<=", t_sla))

    for j in p.classes:
        for r, limit in p.cap.get(j, {}).items():
            if math.isinf(limit):
                continue
            coeffs = [0.0] * n
            any_demand = False
            for i in p.tasks:
                th = p.theta.get(i, {}).get(j, {}).get(r, 0.0)
                if th:
                    coeffs[col[f"x[{i}][{j}]"]] = th
                    any_demand = True
            if any_demand:
                rows.append((coeffs, "<=", float(limit)))

    return LpStandardForm(objective=objective, rows=rows, upper=upper, names=names)


def solve_lp(lp: LpStandardForm) -> Assignment:
    sol = simplex_solve(lp)
    x: dict = {}
    slack: dict = {}
    for name, k in lp.var_index.items():
        val = float(sol.x[k])
        if name.startswith("x["):
            i, j = name[2:-1].split("][", 1)
            x.setdefault(i, {})[j] = val
        else:
            slack[name] = val
    return Assignment(x=x, slack=slack, objective=sol.objective,
                      stats={"iterations": sol.iterations})


def solve_fractional(p: AssignmentProblem) -> Assignment:
    return solve_lp(build_lp(p))


# --- discrete search ------------------------------------------------------------


def solve_discrete(p: AssignmentProblem, opts: Optional[SolveOptions] = None) -> Assignment:
    """Exact optimum over all integral assignments via branch-and-bound.
    Bound = accumulated cost + sum of per-task minimum node costs, which is
    admissible because communication terms are nonnegative. Ties resolve to
    the lexicographically first assignment in (task order, class order)."""
    opts = opts or SolveOptions()
    tasks = p.tasks
    allowed = {i: p.allowed(i) for i in tasks}
    for i in tasks:
        if not allowed[i]:
            raise Infeasible(f"task {i!r} has no candidate class")
    tij = {i: {j: compute_tij(p, i, j) for j in allowed[i]} for i in tasks}
    ncost = {i: {j: node_cost(p, i, j) for j in allowed[i]} for i in tasks}
    min_cost = {i: min(ncost[i].values()) for i in tasks}
    min_t = {i: min(tij[i].values()) for i in tasks}
    t_sla = p.sla.e2e_ms
    lam = p.sla.lambda_per_ms
    hard = math.isinf(lam)
    end_to_end = p.sla.scope == "end_to_end"

    in_edges: dict = {i: [] for i in tasks}
    order_of = {i: k for k, i in enumerate(tasks)}
    for e in p.edges:
        i, k = e
        later = i if order_of[i] >= order_of[k] else k
        in_edges[later].append(e)

    best_obj = INF
    best: Optional[dict] = None
    explored = 0
    cls_of: dict = {}
    usage: dict = {}

    def rec(idx: int, cost: float, lat: float):
        nonlocal best_obj, best, explored
        explored += 1
        if explored > opts.max_nodes:
            raise BudgetExceeded(f"exceeded {opts.max_nodes} search nodes")
        if idx == len(tasks):
            result = _objective_integral(p, cls_of)
            if result is not None and result.objective < best_obj - 1e-12:
                best_obj = result.objective
                best = dict(cls_of)
            return
        i = tasks[idx]
        remaining = tasks[idx + 1:]
        rem_cost = sum(min_cost[k] for k in remaining)
        rem_t = sum(min_t[k] for k in remaining)
        for j in allowed[i]:
            over = False
            touched = []
            for r, th in p.theta[i][j].items():
                key = (j, r)
                new = usage.get(key, 0.0) + th
                if new > p.cap.get(j, {}).get(r, INF) + 1e-9:
                    over = True
                usage[key] = new
                touched.append((key, th))
            if over:
                for key, th in touched:
                    usage[key] -= th
                continue
            cls_of[i] = j
            edge_cost = edge_lat = 0.0
            for e in in_edges[i]:
                other = e[0] if e[0] != i else e[1]
                if other in cls_of:
                    ms, usd = p.edge_term(e, cls_of[e[0]], cls_of[e[1]])
                    edge_cost += usd
                    edge_lat += ms
            new_cost = cost + ncost[i][j] + edge_cost
            new_lat = lat + tij[i][j] + edge_lat

            bound = new_cost + rem_cost
            prune = bound >= best_obj - 1e-12
            if not prune and t_sla is not None and end_to_end:
                opt_slack = max(0.0, new_lat + rem_t - t_sla)
                if opt_slack > 0:
                    prune = hard or (bound + lam * opt_slack >= best_obj - 1e-12)
            if not prune and t_sla is not None and not end_to_end and hard:
                prune = tij[i][j] > t_sla
            if not prune:
                rec(idx + 1, new_cost, new_lat)

            del cls_of[i]
            for key, th in touched:
                usage[key] -= th

    rec(0, 0.0, 0.0)
    if best is None:
        raise Infeasible("no assignment satisfies the constraints")
    result = _objective_integral(p, best)
    assert result is not None
    return Assignment(
        x={i: {j: 1.0 if j == best[i] else 0.0 for j in allowed[i]} for i in tasks},
        slack=_slack_dict(p, result),
        objective=result.objective,
        per_task_ms=result.per_task_ms,
        stats={"nodes_explored": explored},
    )


def _slack_dict(p: AssignmentProblem, res: EvalResult) -> dict:
    t_sla = p.sla.e2e_ms
    if t_sla is None:
        return {}
    if p.sla.scope == "end_to_end":
        return {"s": max(0.0, res.e2e_ms - t_sla)}
    return {f"s[{i}]": max(0.0, t - t_sla) for i, t in res.per_task_ms.items()}


def enumerate_oracle(p: AssignmentProblem, opts: Optional[SolveOptions] = None) -> Assignment:
    """Exhaustive scan of every integral assignment; the ground truth that
    solve_discrete must match exactly."""
    import itertools

    opts = opts or SolveOptions()
    allowed = [p.allowed(i) for i in p.tasks]
    total = 1
    for a in allowed:
        if not a:
            raise Infeasible(f"task without candidate class")
        total *= len(a)
        if total > opts.enumerate_limit:
            raise TooLarge(f"{total} assignments exceed limit {opts.enumerate_limit}")

    best_obj = INF
    best = None
    best_res = None
    for combo in itertools.product(*allowed):
        cls_of = dict(zip(p.tasks, combo))
        res = _objective_integral(p, cls_of)
        if res is not None and res.objective < best_obj - 1e-12:
            best_obj, best, best_res = res.objective, cls_of, res
    if best is None:
        raise Infeasible("no assignment satisfies the constraints")
    return Assignment(
        x={i: {j: 1.0 if j == best[i] else 0.0 for j in p.allowed(i)} for i in p.tasks},
        slack=_slack_dict(p, best_res),
        objective=best_res.objective,
        per_task_ms=best_res.per_task_ms,
        stats={"nodes_explored": total},
    )


# --- random instances for oracle-equivalence testing ---------------------------


def random_problem(seed: int, max_tasks: int = 6, max_classes: int = 4) -> AssignmentProblem:
    """Seeded random instance with 1-2 resources, chain edges with random
    pairwise communication, and an occasional latency SLA."""
    rng = random.Random(seed)
    n_t = rng.randint(1, max_tasks)
    n_c = rng.randint(1, max_classes)
    tasks = [f"t{k}" for k in range(n_t)]
    classes = [f"c{k}" for k in range(n_c)]
    resources = ["r0", "r1"][: rng.randint(1, 2)]
    theta = {
        i: {j: {r: rng.choice([0.0, round(rng.uniform(0.5, 20.0), 3)])
                for r in resources}
            for j in classes}
        for i in tasks
    }
    perf = {j: {r: round(rng.uniform(0.5, 5.0), 3) for r in resources} for j in classes}
    unit_cost = {j: {r: round(rng.uniform(0.01, 1.0), 4) for r in resources}
                 for j in classes}
    cap = {}
    if rng.random() < 0.3:
        cap = {j: {resources[0]: round(rng.uniform(10.0, 60.0), 2)} for j in classes}
    edges = [(tasks[k], tasks[k + 1]) for k in range(n_t - 1)]
    edge_comm = {}
    for e in edges:
        if rng.random() < 0.7:
            edge_comm[e] = {
                j: {jp: ((0.0, 0.0) if j == jp
                         else (round(rng.uniform(0.0, 8.0), 3),
                               round(rng.uniform(0.0, 0.5), 4)))
                    for jp in classes}
                for j in classes
            }
    if rng.random() < 0.6:
        lam = rng.choice([INF, round(rng.uniform(0.001, 0.1), 4)])
        sla = SlaSpec(mode="latency", e2e_ms=round(rng.uniform(5.0, 80.0), 2),
                      lambda_per_ms=lam, scope="end_to_end")
    else:
        sla = SlaSpec(mode="throughput")
    return AssignmentProblem(
        tasks=tasks, classes=classes, resources=resources,
        theta=theta, perf=perf, unit_cost=unit_cost, cap=cap,
        static_latency={i: round(rng.uniform(0.0, 3.0), 3) for i in tasks},
        pipeline_cost={i: {j: round(rng.uniform(0.0, 2.0), 3) for j in classes}
                       for i in tasks},
        gamma=round(rng.uniform(0.0, 0.01), 4),
        sla=sla, mode="discrete", edges=edges, edge_comm=edge_comm,
    )


def problem_to_json_str(p: AssignmentProblem) -> str:
    return json.dumps(p.to_json(), indent=2, sort_keys=True)
