"""Restricted stochastic dominance tests for paired panel surveys with nonresponse."""

__version__ = "0.1.0"

from .bounds import (
    AssumptionSpec,
    BoundCurves,
    Direction,
    Family,
    KsParams,
    PhiVector,
    PropensityParams,
    bound_curves,
    build_phi,
    make_grid,
    moment_fn,
    population_bounds,
    theta_hat,
)
from .data import (
    FinitePopulation,
    ObservationRecord,
    PairedSample,
    ResponderWeights,
    ResponseShares,
    estimate_shares,
    load_sample,
    responder_weights,
)
from .dominance import WeightedEmpirical, dominance_fn, dominance_fn_parametric, r_kernel
from .pel import PelSolution, l_unrestricted, lr_core, solve_constrained
from .specialfn import GeneralizedArcsine, arcsine_cdf, chi2_1_quantile
from .testing import SensitivityResult, TestConfig, TestReport, emit_bound_curves, min_t_statistic, run_test, sensitivity_sweep
from .variance import DesignEffect, VarianceEstimate, design_effect, hajek_second_moment, jackknife_variance

__all__ = [name for name in dir() if not name.startswith("_")]
