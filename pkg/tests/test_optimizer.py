import math

import pytest

from agentplan.errors import (
    BudgetExceeded,
    Infeasible,
    NonlinearConstraint,
    ShapeMismatch,
    TooLarge,
    ZeroPerf,
)
from agentplan.graph import SlaSpec
from agentplan.optimizer import (
    Assignment,
    AssignmentProblem,
    SolveOptions,
    build_lp,
    compute_tij,
    enumerate_oracle,
    evaluate_assignment,
    random_problem,
    solve_discrete,
    solve_fractional,
    solve_lp,
)

from conftest import two_stage_lp, two_stage_problem

INF = math.inf


def integral(x):
    return Assignment(x={i: {j: 1.0 if j == cls else 0.0 for j in ("HP", "CO")}
                         for i, cls in x.items()})


# --- compute_tij ------------------------------------------------------------


def test_tij_latency_passthrough():
    p = two_stage_problem()
    assert compute_tij(p, "prefill", "HP") == 80.0
    assert compute_tij(p, "decode", "CO") == 30.0


def test_tij_single_roofline_term():
    p = AssignmentProblem(
        tasks=["t"], classes=["c"], resources=["flops"],
        theta={"t": {"c": {"flops": 1.6e13}}},
        perf={"c": {"flops": 1.979e15 / 1e3}},  # FLOPs per ms
        unit_cost={"c": {}},
    )
    assert compute_tij(p, "t", "c") == pytest.approx(8.085, abs=5e-4)


def test_tij_max_over_resources():
    p = AssignmentProblem(
        tasks=["t"], classes=["c"], resources=["a", "b"],
        theta={"t": {"c": {"a": 10.0, "b": 25.0}}},
        perf={"c": {"a": 1.0, "b": 1.0}},
        unit_cost={"c": {}},
    )
    assert compute_tij(p, "t", "c") == 25.0


def test_tij_zero_perf_raises():
    p = AssignmentProblem(
        tasks=["t"], classes=["c"], resources=["a"],
        theta={"t": {"c": {"a": 1.0}}}, perf={"c": {"a": 0.0}},
        unit_cost={"c": {}},
    )
    with pytest.raises(ZeroPerf):
        compute_tij(p, "t", "c")


# --- evaluate_assignment ------------------------------------------------------


def test_option_a_cost_and_latency():
    r = evaluate_assignment(two_stage_problem(),
                            integral({"prefill": "HP", "decode": "HP"}))
    assert r.cost == pytest.approx(0.11, abs=1e-15)
    assert r.e2e_ms == 105.0


def test_option_c_cost_and_latency():
    r = evaluate_assignment(two_stage_problem(lam=0.0),
                            integral({"prefill": "CO", "decode": "CO"}))
    assert r.cost == pytest.approx(0.07, abs=1e-15)
    assert r.e2e_ms == 160.0


def test_zero_demand_costs_nothing():
    p = AssignmentProblem(
        tasks=["t"], classes=["c"], resources=["a"],
        theta={"t": {"c": {"a": 0.0}}}, perf={"c": {"a": 1.0}},
        unit_cost={"c": {"a": 9.0}},
        sla=SlaSpec(mode="latency", e2e_ms=1.0, lambda_per_ms=0.0),
    )
    r = evaluate_assignment(p, Assignment(x={"t": {"c": 1.0}}))
    assert r.cost == 0.0 and r.objective == 0.0


def test_fractions_must_sum_to_one():
    with pytest.raises(ShapeMismatch):
        evaluate_assignment(two_stage_problem(),
                            Assignment(x={"prefill": {"HP": 0.5, "CO": 0.2},
                                          "decode": {"HP": 1.0, "CO": 0.0}}))


# --- LP path --------------------------------------------------------------------


def test_build_lp_worked_example_shape():
    lp = build_lp(two_stage_lp())
    assert len(lp.names) == 5  # 4 assignment fractions + 1 end-to-end slack
    senses = [s for _, s, _ in lp.rows]
    assert senses.count("=") == 2  # one assignment row per task


def test_lp_hard_sla_encoded_as_zero_slack_bound():
    p = two_stage_lp()
    lp = build_lp(p)
    s_col = lp.var_index["s"]
    assert lp.upper[s_col] == 0.0  # lambda = inf: no permitted overshoot


def test_lp_end_to_end_matches_discrete_vertex():
    sol = solve_lp(build_lp(two_stage_lp("end_to_end")))
    assert sol.objective == pytest.approx(0.095, abs=1e-9)
    assert sol.x["prefill"]["HP"] == pytest.approx(1.0, abs=1e-9)
    assert sol.x["decode"]["CO"] == pytest.approx(1.0, abs=1e-9)


def test_lp_per_task_scope_goes_fractional():
    sol = solve_lp(build_lp(two_stage_lp("per_task")))
    assert sol.objective == pytest.approx(0.071, abs=1e-9)
    assert sol.x["prefill"]["CO"] == pytest.approx(0.8, abs=1e-9)


def test_lp_rejects_throughput_floor():
    p = two_stage_lp()
    p.sla = SlaSpec(mode="throughput", min_throughput=1.0)
    with pytest.raises(NonlinearConstraint):
        build_lp(p)


def test_lp_rejects_pairwise_edge_comm():
    with pytest.raises(NonlinearConstraint):
        build_lp(two_stage_problem())


def test_lp_single_pair_forced():
    p = AssignmentProblem(
        tasks=["t"], classes=["c"], resources=["a"],
        theta={"t": {"c": {"a": 2.0}}}, perf={"c": {"a": 1.0}},
        unit_cost={"c": {"a": 3.0}},
    )
    sol = solve_fractional(p)
    assert sol.x["t"]["c"] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(6.0)


# --- discrete path --------------------------------------------------------------


def test_discrete_worked_example_optimum():
    a = solve_discrete(two_stage_problem())
    assert a.classes_of() == {"prefill": "HP", "decode": "CO"}
    assert a.objective == 0.095
    assert a.per_task_ms == {"prefill": 80.0, "decode": 30.0}
    assert a.slack == {"s": 0.0}


def test_soft_sla_pivots_to_all_co():
    a = solve_discrete(two_stage_problem(lam=0.0005))
    assert a.classes_of() == {"prefill": "CO", "decode": "CO"}
    assert a.objective == pytest.approx(0.09, abs=1e-15)
    assert a.slack == {"s": 40.0}


def test_hard_sla_infeasible_when_too_tight():
    with pytest.raises(Infeasible):
        solve_discrete(two_stage_problem(t_sla=10.0))
    with pytest.raises(Infeasible):
        enumerate_oracle(two_stage_problem(t_sla=10.0))


def test_single_task_picks_cheapest_class():
    p = AssignmentProblem(
        tasks=["t"], classes=["c0", "c1", "c2"], resources=["u"],
        theta={"t": {j: {"u": 1.0} for j in ("c0", "c1", "c2")}},
        perf={j: {"u": INF} for j in ("c0", "c1", "c2")},
        unit_cost={"c0": {"u": 3.0}, "c1": {"u": 1.0}, "c2": {"u": 2.0}},
    )
    assert solve_discrete(p).classes_of() == {"t": "c1"}
    assert enumerate_oracle(p).classes_of() == {"t": "c1"}


def test_tie_breaks_to_first_class_in_order():
    p = AssignmentProblem(
        tasks=["t"], classes=["z_first", "a_second"], resources=["u"],
        theta={"t": {"z_first": {"u": 1.0}, "a_second": {"u": 1.0}}},
        perf={"z_first": {"u": INF}, "a_second": {"u": INF}},
        unit_cost={"z_first": {"u": 1.0}, "a_second": {"u": 1.0}},
    )
    # class order, not name order, decides ties
    assert solve_discrete(p).classes_of() == {"t": "z_first"}


def test_capacity_prunes_shared_class():
    p = AssignmentProblem(
        tasks=["a", "b"], classes=["cheap", "dear"], resources=["u"],
        theta={i: {"cheap": {"u": 1.0}, "dear": {"u": 1.0}} for i in "ab"},
        perf={j: {"u": INF} for j in ("cheap", "dear")},
        unit_cost={"cheap": {"u": 1.0}, "dear": {"u": 5.0}},
        cap={"cheap": {"u": 1.0}},  # only one task fits on the cheap class
    )
    a = solve_discrete(p)
    assert sorted(a.classes_of().values()) == ["cheap", "dear"]
    assert a.objective == 6.0


def test_budget_exceeded():
    with pytest.raises(BudgetExceeded):
        solve_discrete(two_stage_problem(), SolveOptions(max_nodes=2))


def test_enumerate_too_large():
    with pytest.raises(TooLarge):
        enumerate_oracle(two_stage_problem(), SolveOptions(enumerate_limit=1))


def test_throughput_floor_checked_post_hoc():
    p = two_stage_problem(t_sla=200.0)
    # 1/80 + 1/25 (all-HP) ~ 0.0525 per ms; demand more than any option gives
    p.sla = SlaSpec(mode="throughput", min_throughput=1.0)
    with pytest.raises(Infeasible):
        solve_discrete(p)


# --- cross-solver properties ------------------------------------------------------


def _agree(seed):
    p = random_problem(seed)
    try:
        d = solve_discrete(p)
    except Infeasible:
        with pytest.raises(Infeasible):
            enumerate_oracle(p)
        return
    o = enumerate_oracle(p)
    assert d.objective == o.objective
    assert d.classes_of() == o.classes_of()


def test_oracle_equivalence_sample():
    for seed in range(80):
        _agree(seed)


def test_lp_relaxation_lower_bounds_discrete():
    for seed in range(40):
        p = random_problem(seed)
        p.edge_comm = {}
        if p.sla.min_throughput is not None:
            continue
        try:
            d = solve_discrete(p)
        except Infeasible:
            continue
        try:
            f = solve_fractional(p)
        except Infeasible:
            continue
        assert f.objective <= d.objective + 1e-9


def test_scaling_covariance():
    p = two_stage_problem(lam=0.0005)
    base = solve_discrete(p)
    k = 7.0
    scaled = two_stage_problem(lam=0.0005 * k)
    scaled.unit_cost = {j: {r: v * k for r, v in row.items()}
                        for j, row in scaled.unit_cost.items()}
    scaled.edge_comm = {e: {j: {jp: (ms, usd * k) for jp, (ms, usd) in row.items()}
                            for j, row in t.items()}
                        for e, t in scaled.edge_comm.items()}
    s = solve_discrete(scaled)
    assert s.classes_of() == base.classes_of()
    assert s.objective == pytest.approx(k * base.objective, rel=1e-12)


def test_slack_monotonicity_in_t_sla():
    objs = [solve_discrete(two_stage_problem(t_sla=t)).objective
            for t in (105.0, 120.0, 160.0, 500.0)]
    assert objs == sorted(objs, reverse=True)


def test_objective_nondecreasing_in_lambda():
    objs = [solve_discrete(two_stage_problem(lam=lam)).objective
            for lam in (0.0, 0.0001, 0.0005, 0.002, INF)]
    assert objs == sorted(objs)


def test_returned_assignment_always_feasible():
    for seed in range(40):
        p = random_problem(seed)
        try:
            a = solve_discrete(p)
        except Infeasible:
            continue
        for i in p.tasks:
            assert abs(sum(a.x[i].values()) - 1.0) <= 1e-9
        usage = {}
        cls_of = a.classes_of()
        for i, j in cls_of.items():
            for r, th in p.theta[i][j].items():
                usage[(j, r)] = usage.get((j, r), 0.0) + th
        for (j, r), used in usage.items():
            assert used <= p.cap.get(j, {}).get(r, INF) + 1e-9


def test_problem_json_roundtrip():
    p = two_stage_problem(lam=0.0005)
    q = AssignmentProblem.from_json(p.to_json())
    assert solve_discrete(q).objective == solve_discrete(p).objective
    assert q.edge_comm == p.edge_comm
