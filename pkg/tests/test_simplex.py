import math

import numpy as np
import pytest

from agentplan.errors import Infeasible, Unbounded
from agentplan.simplex import LpStandardForm, solve

INF = math.inf


def lp(objective, rows, upper=None, names=None):
    n = len(objective)
    return LpStandardForm(
        objective=list(objective),
        rows=rows,
        upper=list(upper) if upper else [INF] * n,
        names=list(names) if names else [f"v{i}" for i in range(n)],
    )


def test_box_minimum_at_zero():
    sol = solve(lp([1.0], rows=[], upper=[1.0]))
    assert sol.objective == 0.0


def test_upper_bound_binds_for_maximization_direction():
    sol = solve(lp([-3.0], rows=[], upper=[2.0]))
    assert sol.objective == -6.0 and sol.x[0] == 2.0


def test_simple_two_var():
    # min x + 2y s.t. x + y >= 4, y >= 1
    sol = solve(lp([1.0, 2.0], rows=[([1.0, 1.0], ">=", 4.0), ([0.0, 1.0], ">=", 1.0)]))
    assert sol.objective == pytest.approx(5.0)
    assert sol.x[0] == pytest.approx(3.0) and sol.x[1] == pytest.approx(1.0)


def test_equality_constraint():
    sol = solve(lp([2.0, 3.0], rows=[([1.0, 1.0], "=", 5.0)]))
    assert sol.objective == pytest.approx(10.0)
    assert sol.x[0] == pytest.approx(5.0)


def test_negative_rhs_normalization():
    # x - y <= -2 with min x + y: best is x=0, y=2
    sol = solve(lp([1.0, 1.0], rows=[([1.0, -1.0], "<=", -2.0)]))
    assert sol.objective == pytest.approx(2.0)


def test_infeasible_detected():
    with pytest.raises(Infeasible):
        solve(lp([1.0], rows=[([1.0], ">=", 3.0)], upper=[1.0]))


def test_unbounded_detected():
    with pytest.raises(Unbounded):
        solve(lp([-1.0], rows=[([0.0], "<=", 1.0)]))


def test_degenerate_vertex_terminates():
    # multiple constraints meeting at one vertex (Bland's rule must not cycle)
    rows = [([1.0, 1.0], "<=", 1.0), ([1.0, 0.0], "<=", 1.0),
            ([0.0, 1.0], "<=", 1.0), ([1.0, 1.0], ">=", 1.0)]
    sol = solve(lp([-1.0, -1.0], rows=rows))
    assert sol.objective == pytest.approx(-1.0)


def test_matches_brute_force_on_random_boxes():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        c = rng.uniform(-2, 2, size=n)
        a = rng.uniform(0, 1, size=n)
        b = float(rng.uniform(0.5, float(n)))
        # min c.x s.t. a.x <= b, 0 <= x <= 1 : optimum is at a vertex of the box
        # intersected with one halfspace; check against dense sampling of vertices
        sol = solve(lp(list(c), rows=[(list(a), "<=", b)], upper=[1.0] * n))
        best = math.inf
        for mask in range(2 ** n):
            x = np.array([(mask >> i) & 1 for i in range(n)], dtype=float)
            if a @ x <= b + 1e-12:
                best = min(best, float(c @ x))
            else:
                # vertex of the cut box: scale the last coordinate back
                over = a @ x - b
                for i in range(n):
                    if x[i] == 1.0 and a[i] > 0:
                        xi = x.copy()
                        xi[i] = max(0.0, 1.0 - over / a[i])
                        if a @ xi <= b + 1e-9:
                            best = min(best, float(c @ xi))
        assert sol.objective <= best + 1e-9


def test_var_index_maps_names():
    form = lp([1.0, 1.0], rows=[], names=["alpha", "beta"])
    assert form.var_index == {"alpha": 0, "beta": 1}
