"""Average treatment effects with a functional covariate.

Propensity scores are either modeled directly (functional logistic models
on FPC scores or on a tensor B-spline surface) or obtained by balancing the
FPC-score substitute covariate, then plugged into Horvitz-Thompson and
Hajek weighting estimators.
"""

from .ate import (
    AteEstimate,
    ObservationalData,
    WeightingATE,
    bootstrap,
    estimate_ate,
    estimate_from_weights,
    estimate_hajek,
    estimate_ht,
    fit_propensity,
    percentile_interval,
)
from .basis import BSplineBasis, bspline_eval, fourier, fourier_matrix, tensor_row
from .csvio import read_covariate_csv, read_functional_csv, write_covariate_csv, write_functional_csv
from .exceptions import (
    BalanceNotAttainedError,
    BootstrapUnstableError,
    FuncateError,
    InsufficientComponentsError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidSelectionError,
    NoValidRunsError,
    SeparationError,
    SingularDesignError,
)
from .fpca import FPCA, FpcaModel, Selection, fit_fpca, select_by_aic, select_by_fve
from .funcdata import Grid, GridFunctionSample, center_sample, inner_product, trapezoid_grid
from .logistic import LogisticFit, fit_logistic_mle
from .ps_balance import (
    SubstituteCovariate,
    balance_residual,
    build_substitute,
    fit_cbps,
    fit_kernel_balance,
    sobolev_gram,
    sobolev_kernel,
    solve_arm_weights,
)
from .ps_direct import FGAMPropensity, GFPLMPropensity, PropensityFit, fit_fgam, fit_gfplm
from .simgen import SimDesign, SimSummary, run_cell, run_rng, simulate_dataset, true_propensity

__version__ = "0.1.0"

__all__ = [
    "AteEstimate",
    "balance_residual",
    "BalanceNotAttainedError",
    "bootstrap",
    "BootstrapUnstableError",
    "bspline_eval",
    "BSplineBasis",
    "build_substitute",
    "center_sample",
    "estimate_ate",
    "estimate_from_weights",
    "estimate_hajek",
    "estimate_ht",
    "FGAMPropensity",
    "fit_cbps",
    "fit_fgam",
    "fit_fpca",
    "fit_gfplm",
    "fit_kernel_balance",
    "fit_logistic_mle",
    "fit_propensity",
    "fourier",
    "fourier_matrix",
    "FPCA",
    "FpcaModel",
    "FuncateError",
    "GFPLMPropensity",
    "Grid",
    "GridFunctionSample",
    "inner_product",
    "InsufficientComponentsError",
    "InsufficientDataError",
    "InvalidArgumentError",
    "InvalidSelectionError",
    "LogisticFit",
    "NoValidRunsError",
    "ObservationalData",
    "percentile_interval",
    "PropensityFit",
    "read_covariate_csv",
    "read_functional_csv",
    "run_cell",
    "run_rng",
    "select_by_aic",
    "select_by_fve",
    "Selection",
    "SeparationError",
    "SimDesign",
    "SimSummary",
    "simulate_dataset",
    "SingularDesignError",
    "sobolev_gram",
    "sobolev_kernel",
    "solve_arm_weights",
    "SubstituteCovariate",
    "tensor_row",
    "trapezoid_grid",
    "true_propensity",
    "WeightingATE",
    "write_covariate_csv",
    "write_functional_csv",
]
