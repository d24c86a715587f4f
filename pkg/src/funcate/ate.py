"""Horvitz-Thompson and Hajek estimators, the full estimation pipeline, and bootstrap."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    as_float_vector,
    check_open_probabilities,
    check_scalar_covariates,
    check_treatment,
    split_design,
)
from .exceptions import BootstrapUnstableError, FuncateError, InvalidArgumentError
from .fpca import as_selection
from .funcdata import Grid, GridFunctionSample, trapezoid_grid
from .ps_balance import build_substitute, fit_cbps, fit_kernel_balance
from .ps_direct import METHODS, PropensityFit, fit_fgam, fit_gfplm

MAX_FAILED_FRACTION = 0.2
DEFAULT_CBPS_IDENTIFICATION = "over"


def _weighted_pair(Y, wt, wc) -> tuple[float, float]:
    # shared by every entry point so IPW and weight-based routes agree exactly
    ty, cy = wt @ Y, wc @ Y
    st, sc = wt.sum(), wc.sum()
    ht = float((ty - cy) / Y.shape[0])
    hajek = float(ty / st - cy / sc) if st > 0 and sc > 0 else np.nan
    return ht, hajek


def _ipw_weights(Y, T, p):
    Y = as_float_vector(Y, "outcome")
    n = Y.shape[0]
    T = check_treatment(T, n)
    p = check_open_probabilities(p, n)
    return Y, T, T / p, (1.0 - T) / (1.0 - p)


def estimate_ht(Y, T, p) -> float:
    """Horvitz-Thompson estimate ``(1/n) sum {T Y / p - (1-T) Y / (1-p)}``."""
    Y, _, wt, wc = _ipw_weights(Y, T, p)
    return _weighted_pair(Y, wt, wc)[0]


def estimate_hajek(Y, T, p) -> float:
    """Hajek estimate: arm-normalized inverse propensity weighting."""
    Y, T, wt, wc = _ipw_weights(Y, T, p)
    if T.sum() == 0 or T.sum() == Y.shape[0]:
        raise InvalidArgumentError("Hajek estimator needs both arms nonempty")
    return _weighted_pair(Y, wt, wc)[1]


def estimate_from_weights(Y, T, treated_weights, control_weights) -> tuple[float, float]:
    """HT and Hajek estimates from per-arm weights (e.g. kernel balancing output).

    Returns ``(ht, hajek)``; raises if an arm's weights sum to zero, since the
    Hajek component is then undefined.
    """
    Y = as_float_vector(Y, "outcome")
    n = Y.shape[0]
    T = check_treatment(T, n)
    wt = as_float_vector(treated_weights, "treated_weights", n)
    wc = as_float_vector(control_weights, "control_weights", n)
    if np.any(wt < 0) or np.any(wc < 0):
        raise InvalidArgumentError("weights must be nonnegative")
    if np.any(wt[T == 0] != 0) or np.any(wc[T == 1] != 0):
        raise InvalidArgumentError("weights must be supported on their own arm")
    if wt.sum() <= 0 or wc.sum() <= 0:
        raise InvalidArgumentError("Hajek estimator needs positive weight sums in both arms")
    return _weighted_pair(Y, wt, wc)


def percentile_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Percentile interval with linear interpolation between order statistics."""
    draws = np.asarray(draws, dtype=float)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class ObservationalData:
    """Outcome, binary treatment, scalar covariates and functional covariate of ``n`` subjects."""

    Y: np.ndarray
    T: np.ndarray
    W: np.ndarray
    sample: GridFunctionSample

    def __post_init__(self):
        n = self.sample.n_subjects
        object.__setattr__(self, "Y", as_float_vector(self.Y, "outcome", n))
        object.__setattr__(self, "T", check_treatment(self.T, n))
        object.__setattr__(self, "W", check_scalar_covariates(self.W, n))

    @property
    def n(self) -> int:
        return self.sample.n_subjects

    def take(self, indices) -> "ObservationalData":
        idx = np.asarray(indices)
        return ObservationalData(self.Y[idx], self.T[idx], self.W[idx], self.sample.take(idx))

    def centered(self) -> "ObservationalData":
        """Copy with mean-centered scalar covariates."""
        return ObservationalData(self.Y, self.T, self.W - self.W.mean(axis=0), self.sample)


@dataclass(frozen=True, eq=False)
class AteEstimate:
    ht: float
    hajek: float
    se: tuple[float, float] | None = None
    ci95: tuple[tuple[float, float], tuple[float, float]] | None = None
    draws: np.ndarray | None = field(default=None, repr=False)
    n_failed: int = 0
    propensity: PropensityFit | None = field(default=None, repr=False)


def fit_propensity(
    method: str,
    data: ObservationalData,
    selection=0.95,
    fpca=None,
    cbps_identification: str = DEFAULT_CBPS_IDENTIFICATION,
) -> PropensityFit:
    """Run one of the five propensity methods on ``data``.

    ``CBPS1``/``CBPS2`` default to the over-identified GMM fit, the variant
    that reproduces the published simulation behaviour; pass
    ``cbps_identification="exact"`` for exactly balanced propensities.
    """
    method = method.upper()
    selection = as_selection(selection)
    if method == "GFPLM":
        return fit_gfplm(data.W, data.sample, data.T, selection, fpca=fpca)
    if method == "FGAM":
        return fit_fgam(data.W, data.sample, data.T)
    if method in ("CBPS1", "CBPS2", "KBCB"):
        sub = build_substitute(data.W, data.sample, selection, T=data.T, fpca=fpca)
        if method == "KBCB":
            return fit_kernel_balance(sub, data.T).as_propensity_fit(sub.n_scores)
        return fit_cbps(sub, data.T, int(method[-1]), identification=cbps_identification)
    raise InvalidArgumentError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def estimates_from_fit(fit: PropensityFit, Y, T) -> tuple[float, float]:
    """``(ht, hajek)`` for any propensity fit."""
    if fit.propensities is not None:
        return estimate_ht(Y, T, fit.propensities), estimate_hajek(Y, T, fit.propensities)
    return estimate_from_weights(Y, T, fit.treated_weights, fit.control_weights)


def estimate_ate(
    data: ObservationalData,
    method: str,
    selection=0.95,
    fpca=None,
    cbps_identification: str = DEFAULT_CBPS_IDENTIFICATION,
) -> AteEstimate:
    fit = fit_propensity(method, data, selection, fpca, cbps_identification)
    ht, hajek = estimates_from_fit(fit, data.Y, data.T)
    return AteEstimate(ht, hajek, propensity=fit)


def resolve_n_jobs(n_jobs: int | None = None) -> int:
    """Worker count: explicit value, else ``FUNCATE_THREADS`` (0 = all cores), else 1."""
    if n_jobs is None:
        raw = os.environ.get("FUNCATE_THREADS", "").strip()
        n_jobs = int(raw) if raw else 1
    if n_jobs <= 0:
        n_jobs = os.cpu_count() or 1
    return n_jobs


def _bootstrap_draw(data: ObservationalData, method: str, selection, cbps_identification, seed: int, b: int):
    rng = np.random.default_rng([seed, b])
    idx = rng.integers(0, data.n, size=data.n)
    try:
        est = estimate_ate(data.take(idx), method, selection, cbps_identification=cbps_identification)
    except (FuncateError, np.linalg.LinAlgError, FloatingPointError):
        return None
    if not (np.isfinite(est.ht) and np.isfinite(est.hajek)):
        return None
    return est.ht, est.hajek


def bootstrap(
    data: ObservationalData,
    method: str,
    B: int = 1000,
    seed: int = 0,
    selection=0.95,
    n_jobs: int | None = None,
    cbps_identification: str = DEFAULT_CBPS_IDENTIFICATION,
) -> AteEstimate:
    """Nonparametric bootstrap of the whole pipeline (FPCA, selection, propensity, ATE).

    Resample ``b`` uses its own generator seeded by ``(seed, b)``, so results do
    not depend on the number of workers. Resamples that fail to fit are
    dropped and counted; more than 20% failures raise
    :class:`BootstrapUnstableError`.
    """
    if int(B) != B or B < 100:
        raise InvalidArgumentError(f"bootstrap needs B >= 100 resamples, got {B}")
    selection = as_selection(selection)
    point = estimate_ate(data, method, selection, cbps_identification=cbps_identification)
    jobs = resolve_n_jobs(n_jobs)
    results = Parallel(n_jobs=jobs)(
        delayed(_bootstrap_draw)(data, method, selection, cbps_identification, int(seed), b)
        for b in range(int(B))
    )
    ok = [r for r in results if r is not None]
    n_failed = len(results) - len(ok)
    if n_failed > MAX_FAILED_FRACTION * B:
        raise BootstrapUnstableError(f"{n_failed} of {B} bootstrap resamples failed to fit")
    draws = np.array(ok, dtype=float).reshape(-1, 2)
    se = (float(np.std(draws[:, 0], ddof=1)), float(np.std(draws[:, 1], ddof=1)))
    ci = (percentile_interval(draws[:, 0]), percentile_interval(draws[:, 1]))
    return AteEstimate(point.ht, point.hajek, se, ci, draws, n_failed, point.propensity)


class WeightingATE(BaseEstimator):
    """Propensity-weighted ATE estimator with a scikit-learn style interface.

    Parameters
    ----------
    method : {"GFPLM", "FGAM", "CBPS1", "CBPS2", "KBCB"}
        Propensity score estimation method.
    selection : str
        Truncation rule for FPC scores: ``"fve:<threshold>"``, ``"aic"`` or
        ``"fixed:<L>"``.
    n_scalar : int
        Number of leading columns of ``X`` that are scalar covariates; the rest
        are the functional covariate on the grid.
    grid_points : array-like or None
        Grid on [0, 1]; equally spaced when None.
    n_bootstrap : int
        Bootstrap resamples, 0 to skip.
    random_state : int
        Bootstrap seed.
    cbps_identification : {"over", "exact"}
        CBPS variant used by ``CBPS1``/``CBPS2``.
    """

    def __init__(
        self,
        method="GFPLM",
        selection="fve:0.95",
        n_scalar=0,
        grid_points=None,
        n_bootstrap=0,
        random_state=0,
        cbps_identification=DEFAULT_CBPS_IDENTIFICATION,
    ):
        self.method = method
        self.selection = selection
        self.n_scalar = n_scalar
        self.grid_points = grid_points
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state
        self.cbps_identification = cbps_identification

    def fit(self, X, y, treatment):
        W, values = split_design(X, self.n_scalar)
        grid = trapezoid_grid(values.shape[1]) if self.grid_points is None else Grid.from_points(self.grid_points)
        data = ObservationalData(y, treatment, W, GridFunctionSample(grid, values))
        if self.n_bootstrap:
            est = bootstrap(
                data,
                self.method,
                self.n_bootstrap,
                self.random_state,
                self.selection,
                cbps_identification=self.cbps_identification,
            )
        else:
            est = estimate_ate(data, self.method, self.selection, cbps_identification=self.cbps_identification)
        self.estimate_ = est
        self.ht_ = est.ht
        self.hajek_ = est.hajek
        self.propensity_fit_ = est.propensity
        return self

    def summary(self) -> dict:
        check_is_fitted(self, "estimate_")
        est = self.estimate_
        out = {"ht": est.ht, "hajek": est.hajek}
        if est.se is not None:
            out.update(se_ht=est.se[0], se_hajek=est.se[1], ci_ht=est.ci95[0], ci_hajek=est.ci95[1])
        return out
