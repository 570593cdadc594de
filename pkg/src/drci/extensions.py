"""Difference-in-differences, changes-in-changes, and instrumental-variable
variants of the distributional sensitivity model.

DiD and CIC augment the shift enumeration with a mean-difference constraint
tying the counterfactual mean to an identifiable target: the parallel-trends
combination ``mu_b1 + mu_00 - mu_b0`` for DiD, the mean of the composed CDF
``F_b1(F_b0^{-1}(F_00))`` for CIC.  Relaxing the slack to infinity recovers
the plain distributional bound; zero slack pins the counterfactual mean.

The IV variant bounds the ATT decomposition over the four (treatment,
encouragement) strata.  For each encouragement arm the counterfactual is a
reweighting of that arm's controls, shape-matched to the arm's observed
treated distribution; a relaxed exclusion restriction couples it to the
opposite arm's reweighting through a mean-difference slack.  Shifts for the
two KS constraints are enumerated independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Dataset, WeightedEcdf, cic_target_cdf, ecdf, shift_grid
from .dro_solvers import (
    BoundResult,
    SensitivityConfig,
    _ControlAtoms,
    _distributional_core,
    _infeasible,
    _shift_solve,
    conditional_se,
)

__all__ = [
    "DidTargets",
    "IvStrata",
    "did_att_bound",
    "cic_att_bound",
    "iv_att_bound",
]

_TOL = 1e-9


@dataclass(frozen=True)
class DidTargets:
    """The identifiable means entering the parallel-trends target."""

    mu_b1: float
    mu_00: float
    mu_b0: float

    @property
    def target_mean(self) -> float:
        return self.mu_b1 + self.mu_00 - self.mu_b0

    @classmethod
    def from_dataset(cls, data: Dataset) -> "DidTargets":
        if data.y_b is None:
            raise ValueError("difference-in-differences needs baseline outcomes")
        treated = data.t == 1
        return cls(
            mu_b1=float(data.y_b[treated].mean()),
            mu_00=float(data.y[~treated].mean()),
            mu_b0=float(data.y_b[~treated].mean()),
        )


def _mean_window(target: float, epsilon: float):
    if math.isinf(epsilon):
        return None
    return (target - epsilon, target + epsilon)


def did_att_bound(data: Dataset, config: SensitivityConfig) -> BoundResult:
    """Distributional ATT bound with the counterfactual mean held within
    ``epsilon`` of the parallel-trends target; ``epsilon = 0`` recovers the
    classical DiD point estimate."""
    target = DidTargets.from_dataset(data).target_mean
    return _distributional_core(data, config, _mean_window(target, config.epsilon))


def cic_att_bound(data: Dataset, config: SensitivityConfig) -> BoundResult:
    """As :func:`did_att_bound` but the target mean comes from the
    changes-in-changes composed CDF."""
    if data.y_b is None:
        raise ValueError("changes-in-changes needs baseline outcomes")
    treated = data.t == 1
    f_b1 = ecdf(data.y_b[treated])
    f_b0 = ecdf(data.y_b[~treated])
    f_00 = ecdf(data.y[~treated])
    target = cic_target_cdf(f_b1, f_b0, f_00).mean()
    return _distributional_core(data, config, _mean_window(target, config.epsilon))


# ---------------------------------------------------------------------------
# instrumental variables


@dataclass(frozen=True)
class IvStrata:
    """Outcomes, counts, and proportions of the four (t, z) strata, plus the
    observed treated ECDF per encouragement arm.  Monotonicity (no defiers)
    is assumed, not checked."""

    outcomes: dict[tuple[int, int], np.ndarray]
    indices: dict[tuple[int, int], np.ndarray]
    counts: dict[tuple[int, int], int]
    proportions: dict[tuple[int, int], float]
    treated_ecdf: dict[int, WeightedEcdf]

    @classmethod
    def from_dataset(cls, data: Dataset) -> "IvStrata":
        if data.z is None:
            raise ValueError("instrumental-variables analysis needs an instrument")
        outcomes, indices, counts = {}, {}, {}
        for t in (0, 1):
            for z in (0, 1):
                idx = data.stratum_indices(t, z)
                if idx.size == 0:
                    raise ValueError(f"empty stratum (t={t}, z={z})")
                outcomes[(t, z)] = data.y[idx]
                indices[(t, z)] = idx
                counts[(t, z)] = int(idx.size)
        proportions = {k: v / data.n for k, v in counts.items()}
        treated_ecdf = {z: ecdf(outcomes[(1, z)]) for z in (0, 1)}
        return cls(outcomes, indices, counts, proportions, treated_ecdf)


def iv_att_bound(data: Dataset, config: SensitivityConfig) -> BoundResult:
    """ATT bound under encouragement: per arm ``z``, reweight that arm's
    controls toward the arm's treated shape, coupled to the opposite arm's
    reweighting by a mean-difference slack ``epsilon`` (the relaxed
    exclusion restriction).  Shift pairs are enumerated exhaustively."""
    strata = IvStrata.from_dataset(data)
    warnings = tuple(
        f"stratum (t={t}, z={z}) has fewer than 2 units; bounds may be overly conservative"
        for (t, z), cnt in sorted(strata.counts.items())
        if cnt < 2
    )
    grid = shift_grid(data.y, config.m)
    p1 = strata.proportions[(1, 0)] + strata.proportions[(1, 1)]
    treated_mean = float(data.treated_y.mean())
    maximize = config.direction == "lower"

    estimate_terms = []
    counterfactual = 0.0
    combined_weights: dict[int, float] = {}
    for z in (0, 1):
        share = strata.proportions[(1, z)] / p1
        solved = _solve_iv_arm(strata, z, grid, config, maximize)
        if solved is None:
            return _infeasible(config.direction, treated_mean, warnings)
        mu_star, unit_w = solved
        arm_mean = float(strata.outcomes[(1, z)].mean())
        estimate_terms.append(share * (arm_mean - mu_star))
        counterfactual += share * mu_star
        for i, wi in zip(strata.indices[(0, z)], unit_w):
            combined_weights[int(i)] = share * float(wi)

    estimate = float(sum(estimate_terms))
    se = (
        conditional_se(data, combined_weights)
        if data.n1 >= 2
        else math.nan
    )
    return BoundResult(
        estimate=estimate,
        direction=config.direction,
        weights=combined_weights,
        active_shift=None,
        se=se,
        status="optimal",
        treated_mean=treated_mean,
        counterfactual_mean=counterfactual,
        warnings=warnings,
    )


def _solve_iv_arm(strata: IvStrata, z: int, grid, config: SensitivityConfig,
                  maximize: bool):
    """Extreme counterfactual mean for arm ``z``; returns (mean, weights over
    the (0, z) stratum) or None when no shift pair is feasible."""
    eps = config.epsilon
    target = strata.treated_ecdf[z]
    y_main = strata.outcomes[(0, z)]
    y_other = strata.outcomes[(0, 1 - z)]
    ctrl_main = _ControlAtoms.build(y_main, config.gamma / y_main.size)
    ctrl_other = _ControlAtoms.build(y_other, config.gamma / y_other.size)
    main = _shift_solve(ctrl_main, target, grid, config.delta, config.ks_mode)
    other = _shift_solve(ctrl_other, target, grid, config.delta, config.ks_mode)

    # attainable-interval coupling: the pair is feasible iff the main
    # interval meets the other interval inflated by eps
    low = np.maximum(main.obj_min[:, None], other.obj_min[None, :] - eps)
    high = np.minimum(main.obj_max[:, None], other.obj_max[None, :] + eps)
    ok = main.feasible[:, None] & other.feasible[None, :] & (low <= high + _TOL)
    if not ok.any():
        return None
    values = high if maximize else low

    n_sh = grid.shifts.size
    c1 = np.repeat(grid.shifts, n_sh)
    c2 = np.tile(grid.shifts, n_sh)
    flat_ok = ok.ravel()
    flat_val = values.ravel()
    best = flat_val[flat_ok].max() if maximize else flat_val[flat_ok].min()
    cand = np.flatnonzero(flat_ok & (np.abs(flat_val - best) <= 1e-12))
    order = np.lexsort((c2[cand], np.abs(c2[cand]), c1[cand], np.abs(c1[cand])))
    pick = int(cand[order[0]])
    j1 = pick // n_sh
    mu_star = float(flat_val[pick])
    masses = main.masses_for(j1, mu_star, ctrl_main.atoms)
    return mu_star, ctrl_main.unit_weights(masses)
