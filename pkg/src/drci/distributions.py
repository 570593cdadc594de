"""Weighted empirical CDFs and the distances built on them.

Everything downstream represents outcome distributions as step CDFs with
point masses on observed outcome values.  This module provides the carrier
type (:class:`WeightedEcdf`), the Kolmogorov-Smirnov distance, the
location-shift KS minimization over a symmetric shift grid, the
jump-difference (quasi)metric dual to weight-box constraints, and the
composed CDF used by the change-in-changes target.

Conventions
-----------
CDFs are right-continuous: ``F(y)`` includes the mass at ``y``.  The
generalized inverse is ``inf { y : F(y) >= p }``.  The shift ``c`` enters as
``KS(F(y), G(y + c))``; a result of ``c*`` therefore means G's atoms sit
``c*`` above F's.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WeightedEcdf",
    "ShiftGrid",
    "Dataset",
    "ecdf",
    "ks",
    "min_shift_ks",
    "d0",
    "cic_target_cdf",
    "shift_grid",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class WeightedEcdf:
    """Step CDF with positive masses on strictly increasing atoms.

    ``atoms`` are sorted and distinct (duplicates are merged by the
    :func:`ecdf` constructor), ``weights`` are positive and sum to one.
    ``cum`` caches the cumulative weights for O(log n) evaluation.
    """

    atoms: np.ndarray
    weights: np.ndarray
    cum: np.ndarray = field(init=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if atoms.ndim != 1 or atoms.size == 0:
            raise ValueError("WeightedEcdf needs at least one atom")
        if atoms.shape != weights.shape:
            raise ValueError("atoms and weights must have equal length")
        if np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        cum = np.minimum(np.cumsum(weights), 1.0)  # guard cumsum drift
        cum[-1] = 1.0
        object.__setattr__(self, "cum", cum)

    @property
    def n_atoms(self) -> int:
        return self.atoms.size

    def cdf(self, y) -> np.ndarray | float:
        """Right-continuous CDF evaluated at scalar or array ``y``."""
        idx = np.searchsorted(self.atoms, y, side="right")
        padded = np.concatenate(([0.0], self.cum))
        out = padded[idx]
        return float(out) if np.isscalar(y) else out

    def quantile(self, p) -> np.ndarray | float:
        """Generalized inverse ``inf { y : F(y) >= p }``."""
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any(p_arr < 0) or np.any(p_arr > 1):
            raise ValueError("quantile level must be in [0, 1]")
        # cum is nondecreasing; find first index with cum >= p.
        idx = np.searchsorted(self.cum, p_arr - _WEIGHT_TOL, side="left")
        idx = np.minimum(idx, self.n_atoms - 1)
        out = self.atoms[idx]
        return float(out[0]) if np.isscalar(p) else out

    def mean(self) -> float:
        return float(self.atoms @ self.weights)

    def jumps_at(self, points: np.ndarray) -> np.ndarray:
        """Point mass at each of ``points`` (0 where no atom sits)."""
        points = np.asarray(points, dtype=float)
        idx = np.searchsorted(self.atoms, points, side="left")
        idx_c = np.minimum(idx, self.n_atoms - 1)
        hit = self.atoms[idx_c] == points
        return np.where(hit, self.weights[idx_c], 0.0)


@dataclass(frozen=True)
class ShiftGrid:
    """Symmetric grid of candidate location shifts.

    ``shifts[j] = c0 + j * epsilon`` for ``j = 0..2m`` with
    ``c0 = -(max - min)`` of the generating values and
    ``epsilon = (max - min) / m``; ``anchor`` keeps the generating minimum so
    the double-grid KS evaluation points ``anchor + k * epsilon`` can be
    reconstructed.  A degenerate range collapses to the single shift 0.
    """

    c0: float
    epsilon: float
    m: int
    anchor: float
    shifts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shifts", np.asarray(self.shifts, dtype=float))

    @property
    def degenerate(self) -> bool:
        return self.shifts.size == 1


def shift_grid(values, m: int) -> ShiftGrid:
    """Build the shift grid spanning ``[-(max-min), +(max-min)]``.

    All-equal ``values`` yield the degenerate single-shift grid {0}.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("shift_grid needs at least two values")
    if m < 1:
        raise ValueError("m must be a positive integer")
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span == 0.0:
        return ShiftGrid(c0=0.0, epsilon=0.0, m=m, anchor=lo, shifts=np.zeros(1))
    eps = span / m
    shifts = -span + eps * np.arange(2 * m + 1)
    shifts[m] = 0.0  # guard against accumulated rounding at the center
    return ShiftGrid(c0=-span, epsilon=eps, m=m, anchor=lo, shifts=shifts)


def ecdf(values, weights=None) -> WeightedEcdf:
    """Weighted ECDF of ``values``; duplicates merged, weights normalized.

    Raises on empty input, negative weights, or zero total weight.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("ecdf needs a nonempty 1-d value array")
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != values.shape:
            raise ValueError("values and weights must have equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("total weight must be positive")
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    uniq, inverse = np.unique(v, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inverse, w)
    merged /= total
    keep = merged > 0
    if not keep.any():
        raise ValueError("total weight must be positive")
    return WeightedEcdf(atoms=uniq[keep], weights=merged[keep])


def ks(f: WeightedEcdf, g: WeightedEcdf) -> float:
    """Kolmogorov-Smirnov distance ``max_y |F(y) - G(y)|``.

    The supremum of a difference of step functions is attained on the union
    of their atoms, so only those points are evaluated.
    """
    pts = np.union1d(f.atoms, g.atoms)
    return float(np.max(np.abs(f.cdf(pts) - g.cdf(pts))))


def _ks_at_shift(f: WeightedEcdf, g: WeightedEcdf, c: float) -> float:
    """Exact ``max_y |F(y) - G(y + c)|`` for a single shift."""
    pts = np.union1d(f.atoms, g.atoms - c)
    return float(np.max(np.abs(f.cdf(pts) - g.cdf(pts + c))))


def min_shift_ks(
    f: WeightedEcdf,
    g: WeightedEcdf,
    grid: ShiftGrid,
    mode: str = "exact_atoms",
) -> tuple[float, float]:
    """Minimize ``KS(F(y), G(y + c))`` over the grid's shifts.

    ``exact_atoms`` evaluates the exact KS per shift (atom unions);
    ``grid`` evaluates the double-grid approximation with F at
    ``anchor + k*eps`` and G at ``anchor + c0 + (j+k)*eps``.  Ties break
    toward the shift of smallest absolute value, then the smaller shift.

    Returns ``(distance, shift)``.
    """
    if mode not in ("grid", "exact_atoms"):
        raise ValueError(f"unknown mode {mode!r}")
    shifts = grid.shifts
    if mode == "exact_atoms" or grid.degenerate:
        dists = np.array([_ks_at_shift(f, g, c) for c in shifts])
    else:
        k = np.arange(2 * grid.m + 1)
        f_vals = f.cdf(grid.anchor + k * grid.epsilon)
        # G at anchor + c0 + (j+k)*eps for j+k in 0..4m.
        q = np.arange(4 * grid.m + 1)
        g_vals = g.cdf(grid.anchor + grid.c0 + q * grid.epsilon)
        windows = np.lib.stride_tricks.sliding_window_view(g_vals, 2 * grid.m + 1)
        dists = np.max(np.abs(f_vals[None, :] - windows), axis=1)
    # lexicographic tie-break: distance, |shift|, shift
    order = np.lexsort((shifts, np.abs(shifts), dists))
    best = order[0]
    return float(dists[best]), float(shifts[best])


def d0(f: WeightedEcdf, g: WeightedEcdf, regime: str = "gamma_ge_2") -> float:
    """Jump-difference distance over the union of jump points.

    ``gamma_ge_2``: ``max_y |jump_F(y) - jump_G(y)|`` (a metric).
    ``gamma_lt_2``: ``max_y max(jump_F(y) - jump_G(y), 0)`` (a quasimetric;
    order of arguments matters).
    """
    if regime not in ("gamma_ge_2", "gamma_lt_2"):
        raise ValueError(f"unknown regime {regime!r}")
    pts = np.union1d(f.atoms, g.atoms)
    diff = f.jumps_at(pts) - g.jumps_at(pts)
    if regime == "gamma_ge_2":
        return float(np.max(np.abs(diff)))
    return float(max(np.max(diff), 0.0))


def cic_target_cdf(
    f_b1: WeightedEcdf, f_b0: WeightedEcdf, f_00: WeightedEcdf
) -> WeightedEcdf:
    """Composed CDF ``y -> F_b1(F_b0^{-1}(F_00(y)))`` on ``F_00``'s atoms.

    The composition is nondecreasing, so successive differences give the
    atom masses.  When the top level falls short of 1 (support mismatch
    between the baseline samples) the masses are renormalized; on panels
    where both baseline CDFs carry the same attainable levels the
    composition is exact.
    """
    atoms = f_00.atoms
    levels = f_b1.cdf(f_b0.quantile(f_00.cum))
    masses = np.diff(levels, prepend=0.0)
    masses = np.maximum(masses, 0.0)
    if masses.sum() <= 0:
        raise ValueError("degenerate composition: no mass below F_b0's support")
    return ecdf(atoms, masses)


@dataclass(frozen=True)
class Dataset:
    """Per-unit sample: outcome, treatment, optional baseline outcome,
    optional binary instrument, optional covariates.

    Arrays share length ``n``; covariates are an ``(n, J)`` matrix.  Both
    arms must be nonempty, and when an instrument is present the four
    ``(t, z)`` strata proportions sum to one by construction.
    """

    y: np.ndarray
    t: np.ndarray
    y_b: np.ndarray | None = None
    z: np.ndarray | None = None
    x: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        t = np.asarray(self.t)
        if y.ndim != 1 or y.size < 2:
            raise ValueError("Dataset needs at least two units")
        if t.shape != y.shape:
            raise ValueError("y and t must have equal length")
        if not np.all(np.isin(t, (0, 1))):
            raise ValueError("treatment must be binary 0/1")
        t = t.astype(np.int8)
        if t.sum() == 0 or t.sum() == t.size:
            raise ValueError("both treatment arms must be nonempty")
        if not np.all(np.isfinite(y)):
            raise ValueError("outcomes must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        for name in ("y_b", "z", "x"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float if name != "z" else None)
            if name == "x":
                if arr.ndim != 2 or arr.shape[0] != y.size:
                    raise ValueError("x must be an (n, J) matrix")
                arr = arr.astype(float)
            else:
                if arr.shape != y.shape:
                    raise ValueError(f"{name} must have length n")
                if name == "z":
                    if not np.all(np.isin(arr, (0, 1))):
                        raise ValueError("instrument must be binary 0/1")
                    arr = arr.astype(np.int8)
                elif not np.all(np.isfinite(arr)):
                    raise ValueError("baseline outcomes must be finite")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def n1(self) -> int:
        return int(self.t.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def treated_y(self) -> np.ndarray:
        return self.y[self.t == 1]

    @property
    def control_y(self) -> np.ndarray:
        return self.y[self.t == 0]

    @property
    def control_indices(self) -> np.ndarray:
        return np.flatnonzero(self.t == 0)

    @property
    def covariate_dim(self) -> int:
        return 0 if self.x is None else self.x.shape[1]

    def stratum_indices(self, t: int, z: int) -> np.ndarray:
        if self.z is None:
            raise ValueError("dataset carries no instrument")
        return np.flatnonzero((self.t == t) & (self.z == z))

    def stratum_counts(self) -> dict[tuple[int, int], int]:
        return {
            (t, z): self.stratum_indices(t, z).size
            for t in (0, 1)
            for z in (0, 1)
        }

    def stratum_proportions(self) -> dict[tuple[int, int], float]:
        return {k: v / self.n for k, v in self.stratum_counts().items()}

    def swap_arms(self) -> "Dataset":
        """Relabel treatment (1 - t); used by the ATC-by-symmetry route."""
        return Dataset(y=self.y, t=1 - self.t, y_b=self.y_b, z=self.z, x=self.x)
