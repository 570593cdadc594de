import math

import numpy as np
import pytest

from drci.distributions import Dataset
from drci.dro_solvers import (
    SensitivityConfig,
    atc_bound,
    balance_terms,
    conditional_se,
    distributional_att_bound,
    marginal_att_bound,
    minimal_achievable_ks,
    tv_att_bound,
)
from drci.lp_core import LpProblem, solve_lp

from oracles import box_simplex_extreme, brute_distributional, vertex_solve

FIVE_UNITS = Dataset(y=[0, 1, 2, 2, 3], t=[0, 0, 0, 1, 1])


def _random_dataset(rng, n0_max=8, n1_max=8):
    n0 = int(rng.integers(2, n0_max + 1))
    n1 = int(rng.integers(2, n1_max + 1))
    y = np.concatenate([rng.normal(0, 1, n0), rng.normal(0.7, 1.3, n1)])
    t = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return Dataset(y=y, t=t)


class TestMarginal:
    def test_gamma_one_is_difference_in_means(self):
        r = marginal_att_bound(FIVE_UNITS, 1.0, "lower")
        assert r.estimate == pytest.approx(1.5)
        assert r.counterfactual_mean == pytest.approx(1.0)

    def test_gamma_two_lower(self):
        r = marginal_att_bound(FIVE_UNITS, 2.0, "lower")
        assert r.counterfactual_mean == pytest.approx(1.5)
        assert r.estimate == pytest.approx(1.0)
        w = [r.weights[i] for i in (0, 1, 2)]
        assert w == pytest.approx([1 / 6, 1 / 6, 2 / 3])

    def test_gamma_two_upper(self):
        r = marginal_att_bound(FIVE_UNITS, 2.0, "upper")
        assert r.counterfactual_mean == pytest.approx(0.5)
        assert r.estimate == pytest.approx(2.0)

    def test_gamma_below_one_rejected(self):
        with pytest.raises(ValueError):
            marginal_att_bound(FIVE_UNITS, 0.9, "lower")

    def test_result_invariants(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            data = _random_dataset(rng)
            r = marginal_att_bound(data, float(rng.uniform(1, 5)), "lower")
            w = np.array(list(r.weights.values()))
            assert w.sum() == pytest.approx(1.0, abs=1e-8)
            assert np.all(w >= 0)
            assert r.estimate == pytest.approx(
                r.treated_mean - r.counterfactual_mean, abs=1e-12
            )

    def test_greedy_matches_enumeration_and_simplex(self):
        rng = np.random.default_rng(22)
        for _ in range(550):
            data = _random_dataset(rng)
            gamma = float(rng.uniform(1, 5))
            for direction, maximize in (("lower", True), ("upper", False)):
                r = marginal_att_bound(data, gamma, direction)
                y0 = data.control_y
                n0 = y0.size
                oracle = box_simplex_extreme(
                    y0, 1 / (gamma * n0), gamma / n0, maximize=maximize
                )
                assert r.counterfactual_mean == pytest.approx(oracle, abs=1e-9)
                lp = solve_lp(LpProblem(
                    c=y0, sense="max" if maximize else "min",
                    a_eq=np.ones((1, n0)), b_eq=[1.0],
                    lower=np.full(n0, 1 / (gamma * n0)),
                    upper=np.full(n0, gamma / n0),
                ))
                assert r.counterfactual_mean == pytest.approx(
                    lp.objective_value, abs=1e-9
                )


class TestTv:
    def test_zero_radius(self):
        r = tv_att_bound(FIVE_UNITS, 0.0, "lower")
        assert r.estimate == pytest.approx(1.5, abs=1e-9)

    def test_vacuous_radius_hits_control_max(self):
        r = tv_att_bound(FIVE_UNITS, 1.0, "lower")
        assert r.counterfactual_mean == pytest.approx(2.0, abs=1e-9)
        assert r.estimate == pytest.approx(0.5, abs=1e-9)

    def test_third_radius_against_lp_oracle(self):
        # optimal play moves 1/3 of mass from the lowest atom to the top one
        r = tv_att_bound(FIVE_UNITS, 1 / 3, "lower")
        n0 = 3
        eye = np.eye(n0)
        status, val, _ = vertex_solve(
            np.concatenate([np.array([0.0, 1.0, 2.0]), np.zeros(n0)]),
            a_ub=np.vstack([
                np.hstack([eye, -eye]),
                np.hstack([-eye, -eye]),
                np.concatenate([np.zeros(n0), np.full(n0, 0.5)])[None, :],
            ]),
            b_ub=np.concatenate([np.full(n0, 1 / 3), np.full(n0, -1 / 3), [1 / 3]]),
            a_eq=np.concatenate([np.ones(n0), np.zeros(n0)])[None, :],
            b_eq=[1.0],
            lower=np.zeros(2 * n0), upper=np.ones(2 * n0),
            sense="max",
        )
        assert status == "optimal"
        assert val == pytest.approx(5 / 3, abs=1e-9)
        assert r.counterfactual_mean == pytest.approx(val, abs=1e-9)
        assert r.estimate == pytest.approx(2.5 - 5 / 3, abs=1e-9)

    def test_radius_validation(self):
        with pytest.raises(ValueError):
            tv_att_bound(FIVE_UNITS, 1.2, "lower")


class TestDistributional:
    def test_vacuous_ks_point_mass(self):
        cfg = SensitivityConfig(gamma=3.0, delta=1.0, m=4)
        r = distributional_att_bound(FIVE_UNITS, cfg)
        assert r.estimate == pytest.approx(0.5, abs=1e-9)
        assert r.counterfactual_mean == pytest.approx(2.0, abs=1e-9)

    def test_gamma_one_forces_uniform(self):
        cfg = SensitivityConfig(gamma=1.0, delta=1.0, m=4)
        r = distributional_att_bound(FIVE_UNITS, cfg)
        assert r.estimate == pytest.approx(1.5, abs=1e-9)

    def test_infeasible_is_a_valid_return(self):
        data = Dataset(y=[0.0, 1.0, 0.0, 0.4, 1.0], t=[0, 0, 1, 1, 1])
        cfg = SensitivityConfig(gamma=5.0, delta=0.05, m=5, ks_mode="exact_atoms")
        r = distributional_att_bound(data, cfg)
        assert r.status == "infeasible"
        assert math.isnan(r.estimate)
        assert r.weights == {}

    @pytest.mark.parametrize("mode", ["grid", "exact_atoms"])
    def test_matches_bruteforce_enumeration(self, mode):
        rng = np.random.default_rng(23)
        for _ in range(40):
            data = _random_dataset(rng, n0_max=5, n1_max=5)
            gamma = float(rng.uniform(1, 4))
            delta = float(rng.uniform(0.05, 0.9))
            m = int(rng.integers(1, 4))
            for direction in ("lower", "upper"):
                cfg = SensitivityConfig(gamma=gamma, delta=delta, m=m,
                                        direction=direction, ks_mode=mode)
                r = distributional_att_bound(data, cfg)
                status, est, _ = brute_distributional(
                    data.control_y, data.treated_y, gamma, delta, m,
                    mode=mode, direction=direction, backend="vertex",
                )
                assert r.status == status
                if status == "optimal":
                    assert r.estimate == pytest.approx(est, abs=1e-8)

    def test_weights_feasible_at_reported_shift(self):
        rng = np.random.default_rng(24)
        for _ in range(30):
            data = _random_dataset(rng)
            cfg = SensitivityConfig(
                gamma=float(rng.uniform(1, 4)),
                delta=float(rng.uniform(0.2, 1.0)),
                m=int(rng.integers(2, 6)),
                ks_mode="exact_atoms",
            )
            r = distributional_att_bound(data, cfg)
            if r.status != "optimal":
                continue
            w = np.array([r.weights[int(i)] for i in data.control_indices])
            assert w.sum() == pytest.approx(1.0, abs=1e-8)
            assert np.all(w >= -1e-12)
            assert np.all(w <= cfg.gamma / data.n0 + 1e-9)
            # reported weighted CDF honours the KS band at the active shift
            from drci.distributions import ecdf
            fw = ecdf(data.control_y, np.maximum(w, 0))
            f1 = ecdf(data.treated_y)
            pts = np.union1d(fw.atoms, f1.atoms - r.active_shift)
            gap = np.abs(fw.cdf(pts) - f1.cdf(pts + r.active_shift)).max()
            assert gap <= cfg.delta + 1e-7

    def test_tie_breaks_toward_small_shift(self):
        # symmetric data make +/- shifts equally good; the center must win
        data = Dataset(y=[-1.0, 1.0, -1.0, 1.0], t=[0, 0, 1, 1])
        cfg = SensitivityConfig(gamma=1.0, delta=1.0, m=3)
        r = distributional_att_bound(data, cfg)
        assert r.active_shift == 0.0


class TestAtc:
    def test_swap_symmetry(self):
        rng = np.random.default_rng(25)
        for model in ("marginal", "tv", "distributional"):
            for _ in range(10):
                data = _random_dataset(rng)
                cfg = SensitivityConfig(gamma=2.0, delta=0.8, lambda_tv=0.3, m=3)
                r = atc_bound(data, model, cfg)
                swapped = data.swap_arms()
                if model == "marginal":
                    inner = marginal_att_bound(swapped, cfg.gamma, "upper")
                elif model == "tv":
                    inner = tv_att_bound(swapped, cfg.lambda_tv, "upper")
                else:
                    from dataclasses import replace
                    inner = distributional_att_bound(
                        swapped, replace(cfg, direction="upper")
                    )
                assert r.estimate == pytest.approx(-inner.estimate, abs=1e-12)

    def test_gamma_one_marginal(self):
        r = atc_bound(FIVE_UNITS, "marginal", SensitivityConfig(gamma=1.0))
        assert r.estimate == pytest.approx(1.5, abs=1e-9)

    def test_small_instance_against_oracle(self):
        rng = np.random.default_rng(26)
        for _ in range(20):
            data = _random_dataset(rng, n0_max=5, n1_max=5)
            gamma = float(rng.uniform(1, 4))
            r = atc_bound(data, "marginal", SensitivityConfig(gamma=gamma))
            # ATC lower = counterfactual treated mean minimum minus control mean
            oracle = box_simplex_extreme(
                data.treated_y, 1 / (gamma * data.n1), gamma / data.n1,
                maximize=False,
            )
            assert r.estimate == pytest.approx(
                oracle - data.control_y.mean(), abs=1e-9
            )
            assert r.estimate == pytest.approx(
                r.treated_mean - r.counterfactual_mean, abs=1e-12
            )

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            atc_bound(FIVE_UNITS, "nearest", SensitivityConfig())


def _covariate_dataset():
    # controls carry covariate x1 = 0..3; treated mean of x1 is 2.5
    y = np.array([10.0, 0.0, 0.0, 0.0, 5.0, 5.0])
    t = np.array([0, 0, 0, 0, 1, 1])
    x = np.array([[0.0], [1.0], [2.0], [3.0], [2.0], [3.0]])
    return Dataset(y=y, t=t, x=x)


class TestBalance:
    def test_zero_penalty_unchanged(self):
        data = _covariate_dataset()
        plain = distributional_att_bound(
            data, SensitivityConfig(gamma=4.0, delta=1.0, m=2)
        )
        with_zero = distributional_att_bound(
            data, SensitivityConfig(gamma=4.0, delta=1.0, m=2, balance_lambda=0.0)
        )
        assert with_zero.estimate == pytest.approx(plain.estimate, abs=1e-12)

    def test_constant_covariate_slack_free(self):
        y = np.array([3.0, 1.0, 4.0, 2.0, 6.0])
        data = Dataset(y=y, t=[0, 0, 0, 1, 1], x=np.ones((5, 1)))
        plain = distributional_att_bound(
            data, SensitivityConfig(gamma=3.0, delta=1.0, m=2)
        )
        balanced = distributional_att_bound(
            data, SensitivityConfig(gamma=3.0, delta=1.0, m=2, balance_lambda=50.0)
        )
        assert balanced.estimate == pytest.approx(plain.estimate, abs=1e-8)

    def test_huge_penalty_is_lexicographic(self):
        data = _covariate_dataset()
        cfg = SensitivityConfig(gamma=4.0, delta=1.0, m=2, balance_lambda=1e6)
        r = distributional_att_bound(data, cfg)
        w = np.array([r.weights[i] for i in range(4)])
        imbalance = abs(2.5 - w @ np.array([0.0, 1.0, 2.0, 3.0]))
        # stage 1: perfect balance is achievable, so it must be (near) attained
        assert imbalance <= 1e-6
        # stage 2: among balanced weights the best weighted outcome is 10/6
        assert r.counterfactual_mean == pytest.approx(10 / 6, abs=1e-5)

    def test_hard_constraint_mode(self):
        data = _covariate_dataset()
        cfg = SensitivityConfig(gamma=4.0, delta=1.0, m=2, balance_epsilon=0.0)
        r = distributional_att_bound(data, cfg)
        w = np.array([r.weights[i] for i in range(4)])
        assert abs(2.5 - w @ np.array([0.0, 1.0, 2.0, 3.0])) <= 1e-7
        assert r.counterfactual_mean == pytest.approx(10 / 6, abs=1e-7)

    def test_vacuous_hard_constraint_equals_fast_path(self):
        # forces the LP route; must agree with the scan-based solver
        data = _covariate_dataset()
        rng = np.random.default_rng(27)
        for _ in range(10):
            gamma = float(rng.uniform(1, 4))
            delta = float(rng.uniform(0.3, 1.0))
            for direction in ("lower", "upper"):
                fast = distributional_att_bound(data, SensitivityConfig(
                    gamma=gamma, delta=delta, m=3, direction=direction))
                lp = distributional_att_bound(data, SensitivityConfig(
                    gamma=gamma, delta=delta, m=3, direction=direction,
                    balance_epsilon=math.inf))
                assert lp.status == fast.status
                if fast.status == "optimal":
                    assert lp.estimate == pytest.approx(fast.estimate, abs=1e-8)

    def test_balance_terms_validation(self):
        data = _covariate_dataset()
        with pytest.raises(ValueError):
            balance_terms(data, -1.0)
        with pytest.raises(ValueError):
            balance_terms(FIVE_UNITS, 1.0)


class TestConditionalSe:
    def test_degenerate_outcomes(self):
        data = Dataset(y=[5.0, 5.0, 7.0, 7.0], t=[0, 0, 1, 1])
        assert conditional_se(data, [0.5, 0.5]) == 0.0

    def test_uniform_weight_reduction(self):
        data = Dataset(y=[0.0, 2.0, 1.0, 3.0], t=[0, 0, 1, 1])
        # s1^2 = 2, n1 = 2; population control term at mu_w = 1 is 0.5
        assert conditional_se(data, [0.5, 0.5]) == pytest.approx(math.sqrt(1.5))

    def test_point_mass_weight(self):
        data = Dataset(y=[0.0, 2.0, 1.0, 3.0], t=[0, 0, 1, 1])
        assert conditional_se(data, [1.0, 0.0]) == pytest.approx(1.0)

    def test_requires_two_treated(self):
        data = Dataset(y=[0.0, 2.0, 1.0], t=[0, 0, 1])
        with pytest.raises(ValueError):
            conditional_se(data, [0.5, 0.5])

    def test_accepts_weight_dict(self):
        data = Dataset(y=[0.0, 2.0, 1.0, 3.0], t=[0, 0, 1, 1])
        assert conditional_se(data, {0: 0.5, 1: 0.5}) == pytest.approx(
            conditional_se(data, [0.5, 0.5])
        )


class TestOrderAndMonotonicity:
    def test_lower_below_upper_and_monotone(self):
        rng = np.random.default_rng(28)
        gammas = [1.0, 1.5, 2.5, 4.0]
        deltas = [0.15, 0.3, 0.6, 1.0]
        radii = [0.0, 0.2, 0.5, 1.0]
        for _ in range(25):
            data = _random_dataset(rng, n0_max=10, n1_max=10)
            prev = None
            for g in gammas:
                low = marginal_att_bound(data, g, "lower").estimate
                up = marginal_att_bound(data, g, "upper").estimate
                assert low <= up + 1e-9
                if prev is not None:
                    assert low <= prev + 1e-9
                prev = low
            prev = None
            for lam in radii:
                low = tv_att_bound(data, lam, "lower").estimate
                assert low <= tv_att_bound(data, lam, "upper").estimate + 1e-9
                if prev is not None:
                    assert low <= prev + 1e-9
                prev = low
            prev = None
            for d in deltas:
                cfg = SensitivityConfig(gamma=2.0, delta=d, m=4)
                r = distributional_att_bound(data, cfg)
                if r.status != "optimal":
                    assert prev is None  # feasibility is monotone in delta
                    continue
                if prev is not None:
                    assert r.estimate <= prev + 1e-9
                prev = r.estimate

    def test_nesting_distributional_wider_than_marginal(self):
        rng = np.random.default_rng(29)
        for _ in range(30):
            data = _random_dataset(rng)
            g = float(rng.uniform(1, 5))
            marg = marginal_att_bound(data, g, "lower").estimate
            dist = distributional_att_bound(
                data, SensitivityConfig(gamma=g, delta=1.0, m=2)
            ).estimate
            assert dist <= marg + 1e-9


class TestFeasibilityThreshold:
    def test_bisection_matches_solver_verdicts(self):
        rng = np.random.default_rng(30)
        for mode in ("grid", "exact_atoms"):
            for _ in range(10):
                data = _random_dataset(rng)
                g = float(rng.uniform(1, 3))
                thr = minimal_achievable_ks(data, g, m=4, ks_mode=mode)
                above = distributional_att_bound(data, SensitivityConfig(
                    gamma=g, delta=min(1.0, thr + 1e-6), m=4, ks_mode=mode))
                assert above.status == "optimal"
                if thr > 1e-6:
                    below = distributional_att_bound(data, SensitivityConfig(
                        gamma=g, delta=max(0.0, thr - 1e-6), m=4, ks_mode=mode))
                    assert below.status == "infeasible"


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma": 0.5},
            {"delta": 1.5},
            {"delta": -0.1},
            {"epsilon": -1.0},
            {"lambda_tv": -0.2},
            {"m": 0},
            {"balance_lambda": -1.0},
            {"balance_epsilon": -0.5},
            {"direction": "sideways"},
            {"ks_mode": "luck"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            SensitivityConfig(**kwargs)
