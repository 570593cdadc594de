"""Distributionally robust bounds on average treatment effects."""

from .distributions import (
    Dataset,
    ShiftGrid,
    WeightedEcdf,
    cic_target_cdf,
    d0,
    ecdf,
    ks,
    min_shift_ks,
    shift_grid,
)
from .dro_solvers import (
    BalanceTerms,
    BoundResult,
    SensitivityConfig,
    atc_bound,
    balance_terms,
    conditional_se,
    distributional_att_bound,
    marginal_att_bound,
    minimal_achievable_ks,
    tv_att_bound,
)
from .extensions import (
    DidTargets,
    IvStrata,
    cic_att_bound,
    did_att_bound,
    iv_att_bound,
)
from .lp_core import LpProblem, LpSolution, solve_lp
from .synthetic import (
    BiasRow,
    BiasTable,
    Scenario,
    generate_scenario,
    run_monte_carlo,
    true_att,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ShiftGrid",
    "WeightedEcdf",
    "cic_target_cdf",
    "d0",
    "ecdf",
    "ks",
    "min_shift_ks",
    "shift_grid",
    "BalanceTerms",
    "BoundResult",
    "SensitivityConfig",
    "atc_bound",
    "balance_terms",
    "conditional_se",
    "distributional_att_bound",
    "marginal_att_bound",
    "minimal_achievable_ks",
    "tv_att_bound",
    "DidTargets",
    "IvStrata",
    "cic_att_bound",
    "did_att_bound",
    "iv_att_bound",
    "LpProblem",
    "LpSolution",
    "solve_lp",
    "BiasRow",
    "BiasTable",
    "Scenario",
    "generate_scenario",
    "run_monte_carlo",
    "true_att",
]
