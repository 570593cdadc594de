"""Deterministic bounded-variable linear programming.

A dense two-phase primal simplex with Bland's anti-cycling rule.  Problem
sizes here are at most a few hundred variables, so a dense tableau with
index-based tie-breaking buys determinism and simplicity at negligible cost.

Internally every variable is shifted/flipped/split so that it lives in
``[0, U]`` with ``U`` possibly infinite; inequality rows get slack columns
and rows with negative right-hand sides are negated, after which phase 1
minimizes the sum of artificial variables and phase 2 the real objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LpProblem", "LpSolution", "solve_lp"]

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
_PIVOT_TOL = 1e-10


@dataclass
class LpProblem:
    """min/max ``c @ x`` s.t. ``a_ub @ x <= b_ub``, ``a_eq @ x = b_eq``,
    ``lower <= x <= upper`` (defaults: free variables, no rows)."""

    c: np.ndarray
    sense: str = "min"
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")

        def _rows(a, b, label):
            if a is None or (hasattr(a, "__len__") and len(a) == 0):
                return np.zeros((0, n)), np.zeros(0)
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if a.shape[1] != n:
                raise ValueError(f"{label} rows must have length {n}")
            if a.shape[0] != b.size:
                raise ValueError(f"{label} matrix and rhs disagree in row count")
            return a, b

        self.a_ub, self.b_ub = _rows(self.a_ub, self.b_ub, "inequality")
        self.a_eq, self.b_eq = _rows(self.a_eq, self.b_eq, "equality")
        self.lower = (
            np.full(n, -np.inf)
            if self.lower is None
            else np.atleast_1d(np.asarray(self.lower, dtype=float))
        )
        self.upper = (
            np.full(n, np.inf)
            if self.upper is None
            else np.atleast_1d(np.asarray(self.upper, dtype=float))
        )
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must match the number of variables")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        for arr in (self.c, self.a_ub, self.b_ub, self.a_eq, self.b_eq):
            if np.any(np.isnan(arr)):
                raise ValueError("NaN coefficient in problem data")

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    """Solver outcome: ``status`` in optimal/infeasible/unbounded; ``x`` and
    ``objective_value`` are populated only when optimal."""

    status: str
    x: np.ndarray | None = None
    objective_value: float | None = None


class _Tableau:
    """Simplex working state over the normalized [0, U] variables."""

    def __init__(self, a: np.ndarray, b: np.ndarray, upper: np.ndarray):
        self.a = a
        self.b = b
        self.upper = upper  # per-column upper bound, inf allowed
        self.m, self.n = a.shape
        self.basis = np.full(self.m, -1, dtype=int)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.t = a.copy()
        self.xb = b.copy()

    def nonbasic_value(self, j: int) -> float:
        return self.upper[j] if self.at_upper[j] else 0.0

    def solution(self) -> np.ndarray:
        x = np.where(self.at_upper, np.where(np.isfinite(self.upper), self.upper, 0.0), 0.0)
        x[self.basis] = self.xb
        return x

    def pivot(self, row: int, col: int) -> None:
        piv = self.t[row, col]
        self.t[row] /= piv
        self.xb[row] /= piv
        factors = self.t[:, col].copy()
        factors[row] = 0.0
        self.t -= np.outer(factors, self.t[row])
        self.xb -= factors * self.xb[row]
        self.basis[row] = col

    def run(self, cost: np.ndarray, max_iter: int) -> str:
        """Minimize ``cost`` from the current basis; returns optimal/unbounded."""
        is_basic = np.zeros(self.n, dtype=bool)
        for _ in range(max_iter):
            is_basic[:] = False
            is_basic[self.basis] = True
            d = cost - cost[self.basis] @ self.t
            enter_lo = ~is_basic & ~self.at_upper & (d < -OPT_TOL)
            enter_hi = ~is_basic & self.at_upper & (d > OPT_TOL)
            candidates = np.flatnonzero(enter_lo | enter_hi)
            if candidates.size == 0:
                return "optimal"
            j = int(candidates[0])  # Bland: lowest index
            increasing = not self.at_upper[j]
            # rate of change of basic values per unit move of the entering var
            rate = -self.t[:, j] if increasing else self.t[:, j]
            limits = np.full(self.m, np.inf)
            dec = rate < -_PIVOT_TOL
            limits[dec] = self.xb[dec] / -rate[dec]
            inc = rate > _PIVOT_TOL
            ub_basic = self.upper[self.basis]
            finite_inc = inc & np.isfinite(ub_basic)
            limits[finite_inc] = (ub_basic[finite_inc] - self.xb[finite_inc]) / rate[finite_inc]
            own = self.upper[j]  # range between the variable's two bounds
            row_min = float(limits.min(initial=np.inf))
            t_star = min(row_min, own)
            if not np.isfinite(t_star):
                return "unbounded"
            if own <= row_min:
                # bound flip: variable crosses to its opposite bound
                self.xb = self.xb + own * rate
                self.at_upper[j] = ~self.at_upper[j]
                continue
            blocking = np.flatnonzero(limits <= t_star + 1e-15)
            r = int(blocking[np.argmin(self.basis[blocking])])  # Bland on leaving
            leaving = self.basis[r]
            self.xb = self.xb + t_star * rate
            entering_value = t_star if increasing else self.upper[j] - t_star
            # leaving variable exits at whichever of its bounds blocked
            self.at_upper[leaving] = bool(inc[r])
            self.xb[r] = entering_value
            self.at_upper[j] = False
            row = self.t[r] / self.t[r, j]
            factors = self.t[:, j].copy()
            factors[r] = 0.0
            self.t -= np.outer(factors, row)
            self.t[r] = row
            self.basis[r] = j
        raise RuntimeError("simplex iteration limit exceeded")


def _normalize(problem: LpProblem):
    """Rewrite as min cost over y in [0, U] with equality rows A y = b >= 0."""
    n = problem.n_vars
    sign = 1.0 if problem.sense == "min" else -1.0
    c = sign * problem.c
    lower, upper = problem.lower, problem.upper
    a = np.vstack([problem.a_ub, problem.a_eq])
    b = np.concatenate([problem.b_ub, problem.b_eq])

    cols, costs, ubs, recover = [], [], [], []
    const = 0.0
    for i in range(n):
        lo, hi = lower[i], upper[i]
        col = a[:, i]
        if np.isfinite(lo):
            # x = lo + y
            b = b - col * lo
            const += c[i] * lo
            cols.append(col)
            costs.append(c[i])
            ubs.append(hi - lo)
            recover.append(("shift", i, lo))
        elif np.isfinite(hi):
            # x = hi - y
            b = b - col * hi
            const += c[i] * hi
            cols.append(-col)
            costs.append(-c[i])
            ubs.append(np.inf)
            recover.append(("flip", i, hi))
        else:
            # free: x = y+ - y-
            cols.append(col)
            costs.append(c[i])
            ubs.append(np.inf)
            recover.append(("pos", i, 0.0))
            cols.append(-col)
            costs.append(-c[i])
            ubs.append(np.inf)
            recover.append(("neg", i, 0.0))

    n_ub = problem.a_ub.shape[0]
    for r in range(n_ub):
        slack = np.zeros(a.shape[0])
        slack[r] = 1.0
        cols.append(slack)
        costs.append(0.0)
        ubs.append(np.inf)
        recover.append(("slack", -1, 0.0))

    mat = np.column_stack(cols) if cols else np.zeros((a.shape[0], 0))
    neg = b < 0
    mat[neg] *= -1.0
    b = np.abs(b)
    return mat, b, np.array(costs), np.array(ubs), recover, const, sign


def solve_lp(problem: LpProblem) -> LpSolution:
    """Solve a bounded-variable LP; deterministic for identical input."""
    mat, b, cost, ubs, recover, const, sign = _normalize(problem)
    m, n_cols = mat.shape

    # bound-only problem: each variable independently at its cheaper bound
    if m == 0:
        x = np.zeros(n_cols)
        for j in range(n_cols):
            if cost[j] < 0:
                if not np.isfinite(ubs[j]):
                    return LpSolution(status="unbounded")
                x[j] = ubs[j]
        return _finish(problem, x, recover, const, sign)

    full = np.hstack([mat, np.eye(m)])
    ub_full = np.concatenate([ubs, np.full(m, np.inf)])
    tab = _Tableau(full, b.copy(), ub_full)
    tab.basis = np.arange(n_cols, n_cols + m)
    phase1_cost = np.concatenate([np.zeros(n_cols), np.ones(m)])
    status = tab.run(phase1_cost, max_iter=20000 + 50 * (m + n_cols))
    if status != "optimal" or float(phase1_cost[tab.basis] @ tab.xb) > 1e-8:
        return LpSolution(status="infeasible")

    # drive artificials out of the basis; drop redundant rows
    artificial = tab.basis >= n_cols
    keep_rows = np.ones(m, dtype=bool)
    for r in np.flatnonzero(artificial):
        pivots = np.flatnonzero(np.abs(tab.t[r, :n_cols]) > 1e-9)
        if pivots.size:
            tab.pivot(r, int(pivots[0]))
        else:
            keep_rows[r] = False
    if not keep_rows.all():
        tab.t = tab.t[keep_rows]
        tab.xb = tab.xb[keep_rows]
        tab.basis = tab.basis[keep_rows]
        tab.m = int(keep_rows.sum())
    tab.t = tab.t[:, :n_cols]
    tab.n = n_cols
    tab.upper = ub_full[:n_cols]
    tab.at_upper = tab.at_upper[:n_cols]

    status = tab.run(cost, max_iter=20000 + 50 * (tab.m + n_cols))
    if status == "unbounded":
        return LpSolution(status="unbounded")
    return _finish(problem, tab.solution(), recover, const, sign)


def _finish(problem: LpProblem, y: np.ndarray, recover, const, sign) -> LpSolution:
    x = np.zeros(problem.n_vars)
    for val, (kind, i, offset) in zip(y, recover):
        if kind == "shift":
            x[i] = offset + val
        elif kind == "flip":
            x[i] = offset - val
        elif kind == "pos":
            x[i] += val
        elif kind == "neg":
            x[i] -= val
    # tidy roundoff against the declared bounds, then certify feasibility
    x = np.clip(x, problem.lower, problem.upper)
    if problem.a_ub.shape[0]:
        resid = problem.a_ub @ x - problem.b_ub
        if resid.max(initial=-np.inf) > 1e-8:
            raise RuntimeError("simplex returned an infeasible point (inequality)")
    if problem.a_eq.shape[0]:
        resid = np.abs(problem.a_eq @ x - problem.b_eq)
        if resid.max(initial=0.0) > 1e-8:
            raise RuntimeError("simplex returned an infeasible point (equality)")
    return LpSolution(status="optimal", x=x, objective_value=float(problem.c @ x))
