"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Small instances only (the assignment LPs have tens of variables), so a
dense numpy tableau is plenty. Minimization form; variables have lower
bound 0 and optional finite upper bounds, which are materialized as rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CycleLimit, Infeasible, Unbounded

_TOL = 1e-9


@dataclass
class LpStandardForm:
    """min c.x  s.t. rows (A_k.x sense_k b_k), 0 <= x <= upper."""

    objective: list            # length n
    rows: list                 # (coeffs: list[n], sense: "<=" | "=" | ">=", rhs)
    upper: list                # per-variable upper bound, math.inf if free above
    names: list                # column label, e.g. "x[prefill][HP]" or "s"
    var_index: dict = field(default_factory=dict)  # label -> column

    def __post_init__(self):
        n = len(self.objective)
        assert len(self.upper) == n and len(self.names) == n
        for coeffs, sense, _ in self.rows:
            assert len(coeffs) == n
            assert sense in ("<=", "=", ">=")
        if not self.var_index:
            self.var_index = {name: i for i, name in enumerate(self.names)}

    @property
    def n_vars(self) -> int:
        return len(self.objective)


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    iterations: int


def _bland_entering(z: np.ndarray) -> int:
    for j, v in enumerate(z):
        if v < -_TOL:
            return j
    return -1


def _bland_leaving(T: np.ndarray, basis: list, col: int) -> int:
    best = -1
    best_ratio = math.inf
    for i in range(T.shape[0] - 1):
        a = T[i, col]
        if a > _TOL:
            ratio = T[i, -1] / a
            if ratio < best_ratio - _TOL or (
                abs(ratio - best_ratio) <= _TOL and (best < 0 or basis[i] < basis[best])
            ):
                best_ratio = ratio
                best = i
    return best


def _pivot(T: np.ndarray, basis: list, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and abs(T[r, col]) > 0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: list, max_iter: int) -> int:
    it = 0
    while True:
        col = _bland_entering(T[-1, :-1])
        if col < 0:
            return it
        row = _bland_leaving(T, basis, col)
        if row < 0:
            raise Unbounded("objective unbounded below")
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise CycleLimit(f"simplex exceeded {max_iter} pivots")


def solve(lp: LpStandardForm) -> LpSolution:
    """Optimal basic feasible solution, or Infeasible/Unbounded."""
    n = lp.n_vars
    rows = [(list(c), s, r) for c, s, r in lp.rows]
    for j, hi in enumerate(lp.upper):
        if math.isfinite(hi):
            bound = [0.0] * n
            bound[j] = 1.0
            rows.append((bound, "<=", hi))

    m = len(rows)
    # normalize rhs >= 0
    norm = []
    for coeffs, sense, rhs in rows:
        if rhs < 0:
            coeffs = [-v for v in coeffs]
            rhs = -rhs
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        norm.append((coeffs, sense, rhs))

    n_slack = sum(1 for _, s, _ in norm if s in ("<=", ">="))
    n_art = sum(1 for _, s, _ in norm if s in ("=", ">="))
    width = n + n_slack + n_art + 1
    T = np.zeros((m + 1, width))
    basis = [0] * m
    slack_at = n
    art_at = n + n_slack
    art_cols = []
    for i, (coeffs, sense, rhs) in enumerate(norm):
        T[i, :n] = coeffs
        T[i, -1] = rhs
        if sense == "<=":
            T[i, slack_at] = 1.0
            basis[i] = slack_at
            slack_at += 1
        elif sense == ">=":
            T[i, slack_at] = -1.0
            slack_at += 1
            T[i, art_at] = 1.0
            basis[i] = art_at
            art_cols.append(art_at)
            art_at += 1
        else:
            T[i, art_at] = 1.0
            basis[i] = art_at
            art_cols.append(art_at)
            art_at += 1

    max_iter = 2000 * (m + width)
    total_it = 0

    # phase 1: minimize sum of artificials
    if art_cols:
        for c in art_cols:
            T[-1, c] = 1.0
        for i in range(m):
            if basis[i] in art_cols:
                T[-1] -= T[i]
        total_it += _run_simplex(T, basis, max_iter)
        if T[-1, -1] < -1e-7:
            raise Infeasible(f"phase-1 residual {-T[-1, -1]:.3e}")
        # drive leftover artificials out of the basis
        for i in range(m):
            if basis[i] in art_cols:
                piv = next((j for j in range(n + n_slack)
                            if abs(T[i, j]) > _TOL), None)
                if piv is not None:
                    _pivot(T, basis, i, piv)
        for c in art_cols:  # forbid re-entry
            T[:, c] = 0.0

    # phase 2
    T[-1, :] = 0.0
    T[-1, :n] = lp.objective
    for i in range(m):
        if abs(T[-1, basis[i]]) > 0:
            T[-1] -= T[-1, basis[i]] * T[i]
    total_it += _run_simplex(T, basis, max_iter)

    x = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, -1]
    return LpSolution(x=x, objective=float(np.dot(lp.objective, x)), iterations=total_it)
