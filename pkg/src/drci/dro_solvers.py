"""Robust ATT/ATC bounds under the three sensitivity models.

The marginal model optimizes a weighted control mean over a box around
uniform weights and has a closed-form greedy solution.  The total-variation
model caps the TV distance between the weights and uniform and is solved as
a linear program.  The distributional model constrains the weighted control
CDF to match the treated CDF in shape up to a location shift within KS
distance ``delta``; it is solved exactly by enumerating the shift grid
(exactly one shift is active) and optimizing the weighted mean per shift.

Per shift, the constraints reduce to interval bounds on the cumulative
weight at each control atom plus per-atom capacities.  The feasible set of
cumulative vectors is a lattice, so the componentwise least (greatest)
element exists and maximizes (minimizes) the weighted mean; both are
computed by prefix/suffix scans, vectorized across all shifts.  Runs with
covariate-balance terms fall back to the bounded-variable simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import Dataset, ShiftGrid, WeightedEcdf, ecdf, shift_grid
from .lp_core import LpProblem, solve_lp

__all__ = [
    "SensitivityConfig",
    "BoundResult",
    "BalanceTerms",
    "marginal_att_bound",
    "tv_att_bound",
    "distributional_att_bound",
    "atc_bound",
    "balance_terms",
    "conditional_se",
    "minimal_achievable_ks",
]

_TOL = 1e-9
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SensitivityConfig:
    """Knobs shared by the sensitivity models.

    ``gamma`` bounds the weight box, ``delta`` the shifted-KS distance,
    ``epsilon`` the mean-difference slack of the DiD/CIC/IV couplings
    (``inf`` disables it), ``lambda_tv`` the TV radius, ``m`` the shift-grid
    resolution, ``balance_lambda``/``balance_epsilon`` the soft/hard
    covariate-balance forms.
    """

    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = math.inf
    lambda_tv: float = 0.0
    m: int = 50
    balance_lambda: float = 0.0
    balance_epsilon: float | None = None
    direction: str = "lower"
    ks_mode: str = "grid"

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must be in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.lambda_tv < 0:
            raise ValueError("lambda_tv must be nonnegative")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.balance_lambda < 0:
            raise ValueError("balance_lambda must be nonnegative")
        if self.balance_epsilon is not None and self.balance_epsilon < 0:
            raise ValueError("balance_epsilon must be nonnegative")
        if self.direction not in ("lower", "upper"):
            raise ValueError("direction must be 'lower' or 'upper'")
        if self.ks_mode not in ("grid", "exact_atoms"):
            raise ValueError("ks_mode must be 'grid' or 'exact_atoms'")

    @property
    def wants_balance(self) -> bool:
        return self.balance_lambda > 0 or self.balance_epsilon is not None


@dataclass(frozen=True)
class BoundResult:
    """A one-sided robust bound with its certificate.

    ``estimate = treated_mean - counterfactual_mean`` whenever the status is
    optimal; ``weights`` maps original unit indices of the reweighted arm to
    weights summing to one.
    """

    estimate: float
    direction: str
    weights: dict[int, float]
    active_shift: float | None
    se: float
    status: str
    treated_mean: float
    counterfactual_mean: float
    warnings: tuple[str, ...] = ()


def _infeasible(direction: str, treated_mean: float, warnings=()) -> BoundResult:
    return BoundResult(
        estimate=math.nan,
        direction=direction,
        weights={},
        active_shift=None,
        se=math.nan,
        status="infeasible",
        treated_mean=treated_mean,
        counterfactual_mean=math.nan,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# control-atom bookkeeping


@dataclass(frozen=True)
class _ControlAtoms:
    """Distinct control outcome values with per-atom capacities."""

    atoms: np.ndarray     # (K,) ascending
    counts: np.ndarray    # units per atom
    inverse: np.ndarray   # atom index per control unit
    caps: np.ndarray      # per-atom capacity = count * gamma / n0

    @classmethod
    def build(cls, control_y: np.ndarray, cap_per_unit: float) -> "_ControlAtoms":
        atoms, inverse, counts = np.unique(
            control_y, return_inverse=True, return_counts=True
        )
        return cls(atoms=atoms, counts=counts, inverse=inverse,
                   caps=counts * cap_per_unit)

    def unit_weights(self, masses: np.ndarray) -> np.ndarray:
        """Split per-atom masses equally among the atom's units."""
        return (masses / self.counts)[self.inverse]


# ---------------------------------------------------------------------------
# per-shift subproblem: extreme weighted means under cumulative bands


def _extreme_cumulatives(lo: np.ndarray, hi: np.ndarray, caps: np.ndarray):
    """Least and greatest feasible cumulative-weight vectors per row.

    ``lo``/``hi`` are (S, K+1) interval bounds on the cumulative weight
    after atom j (index 0 = below all atoms, index K = total mass, pinned to
    1).  Returns ``(feasible, cum_least, cum_great)`` where the cumulative
    matrices are (S, K); the least vector maximizes the weighted mean and
    the greatest minimizes it.
    """
    n_rows, kp1 = lo.shape
    k = kp1 - 1
    p_full = np.concatenate(([0.0], np.cumsum(caps)))  # (K+1,)

    feasible = (
        (lo[:, 0] <= _TOL)
        & (hi[:, 0] >= -_TOL)
        & (lo[:, k] <= 1 + _TOL)
        & (hi[:, k] >= 1 - _TOL)
    )

    lo_c = np.clip(lo, 0.0, 1.0)
    hi_c = np.clip(hi, 0.0, 1.0)
    lo_c[:, 0] = 0.0
    hi_c[:, 0] = 0.0
    lo_c[:, k] = 1.0
    hi_c[:, k] = 1.0

    # least element: backward propagation of lower bounds through capacities
    g = lo_c - p_full
    m_suffix = np.flip(np.maximum.accumulate(np.flip(g, axis=1), axis=1), axis=1)
    r = p_full + m_suffix
    feasible &= r[:, 0] <= _TOL
    cum_least = np.maximum.accumulate(r[:, 1:], axis=1)
    feasible &= np.all(cum_least <= hi_c[:, 1:] + _TOL, axis=1)

    # greatest element: forward propagation of upper bounds
    hh = np.flip(np.minimum.accumulate(np.flip(hi_c, axis=1), axis=1), axis=1)
    d = hh - p_full
    d[:, 0] = 0.0  # cumulative starts at zero
    cum_great = p_full[1:] + np.minimum.accumulate(d, axis=1)[:, 1:]
    feasible &= np.all(cum_great >= lo_c[:, 1:] - _TOL, axis=1)

    cum_least[:, -1] = 1.0
    cum_great[:, -1] = 1.0
    return feasible, cum_least, cum_great


def _masses(cum: np.ndarray) -> np.ndarray:
    return np.maximum(np.diff(cum, prepend=0.0), 0.0)


@dataclass(frozen=True)
class _ShiftSolve:
    """Feasibility and attainable weighted-mean ranges for every shift."""

    shifts: np.ndarray
    feasible: np.ndarray
    obj_min: np.ndarray
    obj_max: np.ndarray
    cum_least: np.ndarray
    cum_great: np.ndarray

    def masses_for(self, idx: int, value: float, atoms: np.ndarray) -> np.ndarray:
        """Per-atom masses attaining ``value`` at shift ``idx`` (blend of the
        two extreme allocations; any intermediate mean is attainable)."""
        v_hi = _masses(self.cum_least[idx])
        v_lo = _masses(self.cum_great[idx])
        f_max, f_min = self.obj_max[idx], self.obj_min[idx]
        if f_max - f_min <= _TIE_TOL:
            return v_hi
        lam = np.clip((value - f_min) / (f_max - f_min), 0.0, 1.0)
        return lam * v_hi + (1.0 - lam) * v_lo


def _band_matrices_grid(
    ctrl: _ControlAtoms, target: WeightedEcdf, grid: ShiftGrid, delta: float
):
    """Cumulative-band matrices (S, K+1) for the double-grid KS constraint."""
    m, eps = grid.m, grid.epsilon
    kk = np.arange(2 * m + 1)
    eval_pts = grid.anchor + kk * eps
    idx = np.searchsorted(ctrl.atoms, eval_pts, side="right")
    f1_line = target.cdf(grid.anchor + grid.c0 + np.arange(4 * m + 1) * eps)
    tmat = np.lib.stride_tricks.sliding_window_view(f1_line, 2 * m + 1)
    n_shifts, k = grid.shifts.size, ctrl.atoms.size
    lo = np.full((n_shifts, k + 1), -np.inf)
    hi = np.full((n_shifts, k + 1), np.inf)
    uq, starts = np.unique(idx, return_index=True)
    lo[:, uq] = np.maximum.reduceat(tmat - delta, starts, axis=1)
    hi[:, uq] = np.minimum.reduceat(tmat + delta, starts, axis=1)
    return lo, hi


def _band_row_exact(
    ctrl: _ControlAtoms, target: WeightedEcdf, c: float, delta: float
):
    """Cumulative bands (K+1,) for the exact KS constraint at one shift."""
    pts = np.union1d(ctrl.atoms, target.atoms - c)
    idx = np.searchsorted(ctrl.atoms, pts, side="right")
    tv = target.cdf(pts + c)
    k = ctrl.atoms.size
    lo = np.full(k + 1, -np.inf)
    hi = np.full(k + 1, np.inf)
    uq, starts = np.unique(idx, return_index=True)
    lo[uq] = np.maximum.reduceat(tv - delta, starts)
    hi[uq] = np.minimum.reduceat(tv + delta, starts)
    return lo, hi


def _shift_solve(
    ctrl: _ControlAtoms,
    target: WeightedEcdf,
    grid: ShiftGrid,
    delta: float,
    ks_mode: str,
) -> _ShiftSolve:
    """Solve the per-shift weighted-mean extremes for every grid shift."""
    if ks_mode == "grid" and not grid.degenerate:
        lo, hi = _band_matrices_grid(ctrl, target, grid, delta)
    else:
        rows = [_band_row_exact(ctrl, target, c, delta) for c in grid.shifts]
        lo = np.stack([r[0] for r in rows])
        hi = np.stack([r[1] for r in rows])
    feasible, cum_least, cum_great = _extreme_cumulatives(lo, hi, ctrl.caps)
    obj_max = _masses_dot(cum_least, ctrl.atoms)
    obj_min = _masses_dot(cum_great, ctrl.atoms)
    return _ShiftSolve(
        shifts=grid.shifts,
        feasible=feasible,
        obj_min=obj_min,
        obj_max=obj_max,
        cum_least=cum_least,
        cum_great=cum_great,
    )


def _masses_dot(cum: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    return np.diff(cum, prepend=0.0, axis=1) @ atoms


def _select_shift(values: np.ndarray, ok: np.ndarray, shifts: np.ndarray,
                  maximize: bool) -> int | None:
    """Index of the best feasible shift; ties go to smallest |c| then c."""
    if not ok.any():
        return None
    masked = np.where(ok, values, -np.inf if maximize else np.inf)
    best = masked.max() if maximize else masked.min()
    cand = np.flatnonzero(ok & (np.abs(values - best) <= _TIE_TOL))
    order = np.lexsort((shifts[cand], np.abs(shifts[cand])))
    return int(cand[order[0]])


# ---------------------------------------------------------------------------
# marginal sensitivity model


def marginal_att_bound(data: Dataset, gamma: float, direction: str = "lower") -> BoundResult:
    """Sharp ATT bound with control weights in ``[1/(gamma n0), gamma/n0]``.

    The weighted-mean extremum over the box-constrained simplex is a
    fractional-knapsack: saturate extreme weights in outcome order, leaving
    at most one fractional weight.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    _check_direction(direction)
    y0 = data.control_y
    n0 = y0.size
    lo, hi = 1.0 / (gamma * n0), gamma / n0
    w = np.full(n0, lo)
    budget = 1.0 - n0 * lo
    # maximize for the lower ATT bound, minimize for the upper
    order = np.lexsort((np.arange(n0), -y0 if direction == "lower" else y0))
    room = hi - lo
    if room > 0 and budget > 0:
        take = np.minimum(room, np.maximum(0.0, budget - room * np.arange(n0)))
        w[order] += take
    w /= w.sum()  # absorb roundoff; exact to float precision already
    counterfactual = float(w @ y0)
    treated_mean = float(data.treated_y.mean())
    return _optimal_result(data, direction, w, counterfactual, treated_mean, None)


def _optimal_result(data, direction, control_weights, counterfactual,
                    treated_mean, active_shift, warnings=()) -> BoundResult:
    weights = {
        int(i): float(wi)
        for i, wi in zip(data.control_indices, control_weights)
    }
    se = (
        conditional_se(data, control_weights)
        if data.n1 >= 2
        else math.nan
    )
    return BoundResult(
        estimate=treated_mean - counterfactual,
        direction=direction,
        weights=weights,
        active_shift=active_shift,
        se=se,
        status="optimal",
        treated_mean=treated_mean,
        counterfactual_mean=counterfactual,
        warnings=tuple(warnings),
    )


def _check_direction(direction: str) -> None:
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")


# ---------------------------------------------------------------------------
# total-variation model


def tv_att_bound(data: Dataset, lambda_tv: float, direction: str = "lower") -> BoundResult:
    """ATT bound over control weights within TV distance ``lambda_tv`` of
    uniform, via the LP with linearized absolute values."""
    if not 0 <= lambda_tv <= 1:
        raise ValueError("lambda_tv must be in [0, 1]")
    _check_direction(direction)
    y0 = data.control_y
    n0 = y0.size
    u = 1.0 / n0
    n_vars = 2 * n0  # weights then their absolute deviations from uniform
    c = np.concatenate([y0, np.zeros(n0)])
    eye = np.eye(n0)
    a_ub = np.vstack(
        [
            np.hstack([eye, -eye]),      # w - t <= u
            np.hstack([-eye, -eye]),     # -w - t <= -u
            np.concatenate([np.zeros(n0), np.full(n0, 0.5)])[None, :],
        ]
    )
    b_ub = np.concatenate([np.full(n0, u), np.full(n0, -u), [lambda_tv]])
    a_eq = np.concatenate([np.ones(n0), np.zeros(n0)])[None, :]
    problem = LpProblem(
        c=c,
        sense="max" if direction == "lower" else "min",
        a_ub=a_ub,
        b_ub=b_ub,
        a_eq=a_eq,
        b_eq=[1.0],
        lower=np.zeros(n_vars),
        upper=np.ones(n_vars),
    )
    sol = solve_lp(problem)
    if sol.status != "optimal":  # cannot happen: uniform weights are feasible
        raise RuntimeError(f"TV LP unexpectedly {sol.status}")
    w = sol.x[:n0]
    treated_mean = float(data.treated_y.mean())
    return _optimal_result(data, direction, w, float(w @ y0), treated_mean, None)


# ---------------------------------------------------------------------------
# distributional sensitivity model


def distributional_att_bound(data: Dataset, config: SensitivityConfig) -> BoundResult:
    """Sharp ATT bound under the shape-up-to-shift ambiguity set.

    Enumerates the 2m+1 grid shifts (the feasibility binaries admit exactly
    one active shift), optimizes the weighted control mean per shift, and
    returns the best feasible shift.  Infeasibility (no shift admits weights
    within KS distance ``delta``) is a valid return, not an error.
    """
    return _distributional_core(data, config, mean_window=None)


def _distributional_core(
    data: Dataset,
    config: SensitivityConfig,
    mean_window: tuple[float, float] | None,
    warnings: tuple[str, ...] = (),
) -> BoundResult:
    treated_mean = float(data.treated_y.mean())
    if config.wants_balance:
        return _distributional_lp_route(data, config, mean_window, treated_mean, warnings)

    y0 = data.control_y
    ctrl = _ControlAtoms.build(y0, config.gamma / y0.size)
    target = ecdf(data.treated_y)
    grid = shift_grid(data.y, config.m)
    solve = _shift_solve(ctrl, target, grid, config.delta, config.ks_mode)

    ok = solve.feasible
    lo_val, hi_val = solve.obj_min.copy(), solve.obj_max.copy()
    if mean_window is not None:
        wlo, whi = mean_window
        ok = ok & (solve.obj_max >= wlo - _TOL) & (solve.obj_min <= whi + _TOL)
        lo_val = np.maximum(lo_val, wlo)
        hi_val = np.minimum(hi_val, whi)

    maximize = config.direction == "lower"
    values = hi_val if maximize else lo_val
    pick = _select_shift(values, ok, solve.shifts, maximize)
    if pick is None:
        return _infeasible(config.direction, treated_mean, warnings)
    value = float(values[pick])
    masses = solve.masses_for(pick, value, ctrl.atoms)
    w = ctrl.unit_weights(masses)
    return _optimal_result(
        data, config.direction, w, value, treated_mean,
        float(solve.shifts[pick]), warnings,
    )


def _distributional_lp_route(
    data: Dataset,
    config: SensitivityConfig,
    mean_window: tuple[float, float] | None,
    treated_mean: float,
    warnings: tuple[str, ...],
) -> BoundResult:
    """Shift enumeration with per-shift LPs; needed once covariate-balance
    terms couple the objective across atoms."""
    y0 = data.control_y
    n0 = y0.size
    ctrl = _ControlAtoms.build(y0, config.gamma / n0)
    target = ecdf(data.treated_y)
    grid = shift_grid(data.y, config.m)

    bal = balance_terms(data, config.balance_lambda) if config.wants_balance else None
    maximize = config.direction == "lower"
    grid_bands = (
        _band_matrices_grid(ctrl, target, grid, config.delta)
        if config.ks_mode == "grid" and not grid.degenerate
        else None
    )

    best = None  # (penalized value, |shift|, shift, w, raw value)
    for j, c_shift in enumerate(grid.shifts):
        if grid_bands is not None:
            lo_row, hi_row = grid_bands[0][j], grid_bands[1][j]
        else:
            lo_row, hi_row = _band_row_exact(ctrl, target, c_shift, config.delta)
        if lo_row[0] > _TOL or hi_row[-1] < 1 - _TOL or lo_row[-1] > 1 + _TOL:
            continue
        sol = _solve_balance_lp(
            data, config, bal, lo_row, hi_row, ctrl, mean_window
        )
        if sol is None:
            continue
        penalized, w = sol
        raw = float(w @ y0)
        key = (
            -penalized if maximize else penalized,
            abs(c_shift),
            c_shift,
        )
        if best is None or key < best[0]:
            best = (key, w, raw, float(c_shift))
    if best is None:
        return _infeasible(config.direction, treated_mean, warnings)
    _, w, raw, c_shift = best
    return _optimal_result(
        data, config.direction, w, raw, treated_mean, c_shift, warnings
    )


def _solve_balance_lp(data, config, bal, lo_row, hi_row, ctrl, mean_window):
    """One per-shift LP over [control weights, balance slacks]."""
    y0 = data.control_y
    n0 = y0.size
    n_aux = bal.n_covariates if bal is not None else 0
    maximize = config.direction == "lower"

    c = np.concatenate([y0, np.zeros(n_aux)])
    if bal is not None and bal.lam > 0 and config.balance_epsilon is None:
        # penalty always degrades the optimum
        c[n0:] = -bal.lam if maximize else bal.lam

    rows_a, rows_b = [], []
    # cumulative KS bands per atom bucket (indicator rows over units)
    k = ctrl.atoms.size
    ind = (ctrl.inverse[None, :] <= np.arange(k)[:, None]).astype(float)
    for q in range(1, k + 1):
        row = np.concatenate([ind[q - 1], np.zeros(n_aux)])
        if hi_row[q] < 1:
            rows_a.append(row)
            rows_b.append(min(hi_row[q], 1.0))
        if lo_row[q] > 0:
            rows_a.append(-row)
            rows_b.append(-lo_row[q])
    s_caps = np.zeros(n_aux)
    if bal is not None:
        for j in range(bal.n_covariates):
            xj = bal.control_x[:, j]
            s = np.zeros(n_aux)
            s[j] = -1.0
            rows_a.append(np.concatenate([xj, s]))
            rows_b.append(bal.treated_means[j])
            rows_a.append(np.concatenate([-xj, s]))
            rows_b.append(-bal.treated_means[j])
            # slack never needs to exceed the worst attainable imbalance;
            # a finite cap keeps the tableau well scaled
            s_caps[j] = max(
                abs(bal.treated_means[j] - xj.min()),
                abs(bal.treated_means[j] - xj.max()),
            ) + 1.0
        if config.balance_epsilon is not None and math.isfinite(config.balance_epsilon):
            rows_a.append(np.concatenate([np.zeros(n0), np.ones(n_aux)]))
            rows_b.append(config.balance_epsilon)
    if mean_window is not None:
        wlo, whi = mean_window
        if math.isfinite(whi):
            rows_a.append(np.concatenate([y0, np.zeros(n_aux)]))
            rows_b.append(whi)
        if math.isfinite(wlo):
            rows_a.append(np.concatenate([-y0, np.zeros(n_aux)]))
            rows_b.append(-wlo)

    cap = config.gamma / n0
    problem = LpProblem(
        c=c,
        sense="max" if maximize else "min",
        a_ub=np.vstack(rows_a) if rows_a else None,
        b_ub=np.asarray(rows_b) if rows_b else None,
        a_eq=np.concatenate([np.ones(n0), np.zeros(n_aux)])[None, :],
        b_eq=[1.0],
        lower=np.zeros(n0 + n_aux),
        upper=np.concatenate([np.full(n0, min(cap, 1.0)), s_caps]),
    )
    sol = solve_lp(problem)
    if sol.status != "optimal":
        return None
    return float(sol.objective_value), sol.x[:n0]


# ---------------------------------------------------------------------------
# ATC by symmetry


def atc_bound(data: Dataset, model: str, config: SensitivityConfig) -> BoundResult:
    """ATC bound: run the ATT machinery on label-swapped data and negate.

    Estimate convention: counterfactual treated mean (reweighted treated
    sample) minus the control mean.
    """
    if model not in ("marginal", "distributional", "tv"):
        raise ValueError(f"unknown model {model!r}")
    swapped = data.swap_arms()
    flipped = "upper" if config.direction == "lower" else "lower"
    if model == "marginal":
        inner = marginal_att_bound(swapped, config.gamma, flipped)
    elif model == "tv":
        inner = tv_att_bound(swapped, config.lambda_tv, flipped)
    else:
        inner = distributional_att_bound(swapped, replace(config, direction=flipped))
    if inner.status != "optimal":
        return _infeasible(config.direction, math.nan, inner.warnings)
    return BoundResult(
        estimate=-inner.estimate,
        direction=config.direction,
        weights=inner.weights,
        active_shift=inner.active_shift,
        se=inner.se,
        status="optimal",
        treated_mean=inner.counterfactual_mean,
        counterfactual_mean=inner.treated_mean,
        warnings=inner.warnings,
    )


# ---------------------------------------------------------------------------
# covariate balance terms


@dataclass(frozen=True)
class BalanceTerms:
    """First-moment balance augmentation for the weight LP.

    Adds one slack ``s_j >= |mean_treated(X_j) - sum_i w_i X_ij|`` per
    covariate via two inequality rows; in Lagrangian form the objective
    gains ``lam * sum_j s_j``, in hard form ``sum_j s_j <= epsilon``.
    """

    treated_means: np.ndarray
    control_x: np.ndarray
    lam: float

    @property
    def n_covariates(self) -> int:
        return self.treated_means.size


def balance_terms(data: Dataset, lam: float) -> BalanceTerms:
    if lam < 0:
        raise ValueError("balance penalty must be nonnegative")
    if data.x is None or data.covariate_dim == 0:
        raise ValueError("dataset carries no covariates")
    treated = data.x[data.t == 1]
    controls = data.x[data.t == 0]
    return BalanceTerms(
        treated_means=treated.mean(axis=0),
        control_x=controls,
        lam=float(lam),
    )


# ---------------------------------------------------------------------------
# fixed-weight standard error


def conditional_se(data: Dataset, weights) -> float:
    """Standard error treating the weights as fixed:
    ``sqrt(s1^2 / n1 + sum_i w_i^2 (Y_i - mu_w)^2)`` with ``s1^2`` the
    unbiased treated-outcome variance and ``mu_w`` the weighted control mean.
    """
    if data.n1 < 2:
        raise ValueError("treated variance needs at least two treated units")
    if isinstance(weights, dict):
        w = np.array([weights.get(int(i), 0.0) for i in data.control_indices])
    else:
        w = np.asarray(weights, dtype=float)
        if w.size != data.n0:
            raise ValueError("weights must cover every control unit")
    if np.any(w < -1e-8) or abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("weights must be nonnegative and sum to 1")
    y0 = data.control_y
    mu_w = float(w @ y0)
    s1_sq = float(np.var(data.treated_y, ddof=1))
    return math.sqrt(s1_sq / data.n1 + float(w**2 @ (y0 - mu_w) ** 2))


# ---------------------------------------------------------------------------
# diagnostics


def minimal_achievable_ks(
    data: Dataset,
    gamma: float,
    m: int = 50,
    ks_mode: str = "grid",
    tol: float = 1e-9,
) -> float:
    """Smallest ``delta`` for which the distributional model is feasible.

    Bisects on the feasibility of the shift enumeration; the model at
    ``delta`` is feasible iff ``delta >=`` this threshold (up to ``tol``).
    """
    y0 = data.control_y
    ctrl = _ControlAtoms.build(y0, gamma / y0.size)
    target = ecdf(data.treated_y)
    grid = shift_grid(data.y, m)

    def feasible(delta: float) -> bool:
        return bool(_shift_solve(ctrl, target, grid, delta, ks_mode).feasible.any())

    lo_d, hi_d = 0.0, 1.0
    if feasible(lo_d):
        return 0.0
    while hi_d - lo_d > tol:
        mid = 0.5 * (lo_d + hi_d)
        if feasible(mid):
            hi_d = mid
        else:
            lo_d = mid
    return hi_d
