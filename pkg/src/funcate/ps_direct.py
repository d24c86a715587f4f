"""Propensity scores by direct likelihood fitting of functional logistic models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from ._validation import check_scalar_covariates, check_treatment, split_design
from .basis import BSplineBasis, bspline_eval
from .exceptions import InsufficientComponentsError, InsufficientDataError, InvalidArgumentError
from .fpca import FpcaModel, Selection, as_selection, fit_fpca
from .funcdata import Grid, GridFunctionSample, trapezoid_grid
from .logistic import fit_logistic_mle

PROPENSITY_CLIP = 1e-6
FGAM_BASIS_SIZE = 7
FGAM_RIDGE = 1e-6
METHODS = ("GFPLM", "FGAM", "CBPS1", "CBPS2", "KBCB")


def clip_propensity(p) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=float), PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Output of any propensity estimation method.

    Exactly one of ``propensities`` or the pair ``treated_weights`` /
    ``control_weights`` is set: kernel balancing returns weights only.
    """

    method: str
    propensities: np.ndarray | None = None
    treated_weights: np.ndarray | None = None
    control_weights: np.ndarray | None = None
    converged: bool = True
    balance_residual: float | None = None
    n_components: int | None = None
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        has_p = self.propensities is not None
        has_w = self.treated_weights is not None and self.control_weights is not None
        if has_p == has_w:
            raise InvalidArgumentError("a propensity fit carries either propensities or arm weights")

    def arm_weights(self, T) -> tuple[np.ndarray, np.ndarray]:
        """Inverse-propensity weights ``T/p`` and ``(1-T)/(1-p)``, or the stored weights."""
        if self.propensities is None:
            return self.treated_weights, self.control_weights
        T = np.asarray(T, dtype=float)
        p = self.propensities
        return T / p, (1.0 - T) / (1.0 - p)


def _check_inputs(W, sample: GridFunctionSample, T):
    n = sample.n_subjects
    return check_scalar_covariates(W, n), check_treatment(T, n)


def fit_gfplm(
    W,
    sample: GridFunctionSample,
    T,
    selection: Selection | str | float | int = 0.95,
    fpca: FpcaModel | None = None,
) -> PropensityFit:
    """Logistic propensity model linear in ``W`` and in the leading FPC scores.

    When the functional covariate has no variation at all, the functional
    term is constant and the fit reduces to ``[1 | W]``.
    """
    W, T = _check_inputs(W, sample, T)
    selection = as_selection(selection)
    n, q = W.shape
    try:
        model = fpca if fpca is not None else fit_fpca(sample)
    except InsufficientComponentsError:
        if selection.rule == "fixed" and selection.value != 0:
            raise
        model = None
    if model is None:
        L, scores = 0, np.empty((n, 0))
    else:
        L = selection.choose(model, W, T)
        scores = model.scores[:, :L]
    if n < q + L + 1:
        raise InsufficientDataError(f"{n} subjects cannot support {q + L + 1} parameters")
    design = np.column_stack([np.ones(n), W, scores])
    fit = fit_logistic_mle(design, T)
    return PropensityFit(
        method="GFPLM",
        propensities=clip_propensity(fit.fitted),
        converged=fit.converged,
        n_components=L,
        coefficients=fit.coefficients,
    )


@dataclass(frozen=True)
class FgamFeatureMap:
    """Tensor-product B-spline features integrated along each trajectory."""

    t_basis: BSplineBasis
    x_basis: BSplineBasis

    @classmethod
    def for_sample(cls, sample: GridFunctionSample, n_basis: int = FGAM_BASIS_SIZE):
        lo = float(sample.values.min()) - 1e-9
        hi = float(sample.values.max()) + 1e-9
        return cls(BSplineBasis.with_size(n_basis, 0.0, 1.0), BSplineBasis.with_size(n_basis, lo, hi))

    def transform(self, sample: GridFunctionSample) -> np.ndarray:
        """``F[i, (j, l)] = sum_g w_g B_j(t_g) B_l(X_i(t_g))``, flattened row-major."""
        grid = sample.grid
        bt = bspline_eval(self.t_basis, grid.points)
        bx = bspline_eval(self.x_basis, sample.values)
        F = np.einsum("g,gj,igl->ijl", grid.weights, bt, bx)
        return F.reshape(sample.n_subjects, -1)


def fit_fgam(W, sample: GridFunctionSample, T, n_basis: int = FGAM_BASIS_SIZE) -> PropensityFit:
    """Functional generalized additive logistic model with a tensor B-spline surface.

    The surface term is collinear with the intercept (x-margin splines sum to
    one), so the non-intercept coefficients carry a ``1e-6`` ridge.
    """
    W, T = _check_inputs(W, sample, T)
    n, q = W.shape
    n_features = n_basis * n_basis
    if n <= q + n_features + 1:
        raise InsufficientDataError(f"{n} subjects cannot support {q + n_features + 1} parameters")
    features = FgamFeatureMap.for_sample(sample, n_basis).transform(sample)
    design = np.column_stack([np.ones(n), W, features])
    fit = fit_logistic_mle(design, T, ridge=FGAM_RIDGE)
    return PropensityFit(
        method="FGAM",
        propensities=clip_propensity(fit.fitted),
        converged=fit.converged,
        coefficients=fit.coefficients,
    )


class _FunctionalClassifierBase(ClassifierMixin, BaseEstimator):
    """Shared plumbing: ``X`` stacks ``n_scalar`` scalar columns and the grid values."""

    def _unpack(self, X, y=None):
        if y is None:
            X = np.asarray(X, dtype=float)
        else:
            X, y = check_X_y(X, y)
        W, values = split_design(X, self.n_scalar)
        if self.grid_points is None:
            grid = trapezoid_grid(values.shape[1])
        else:
            grid = Grid.from_points(self.grid_points)
        return W, GridFunctionSample(grid, values), y

    def _set_classes(self, y):
        self.classes_ = np.array([0, 1])
        return check_treatment(y)

    def predict_proba(self, X):
        p = self.decision_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_proba(X) >= 0.5).astype(int)


class GFPLMPropensity(_FunctionalClassifierBase):
    """Scikit-learn wrapper around :func:`fit_gfplm`.

    ``X`` holds ``n_scalar`` scalar covariates followed by the functional
    covariate on the grid; ``y`` is the binary treatment.
    """

    def __init__(self, n_scalar=0, selection="fve:0.95", grid_points=None):
        self.n_scalar = n_scalar
        self.selection = selection
        self.grid_points = grid_points

    def fit(self, X, y):
        W, sample, y = self._unpack(X, y)
        T = self._set_classes(y)
        self.fpca_ = fit_fpca(sample)
        self.fit_ = fit_gfplm(W, sample, T, self.selection, fpca=self.fpca_)
        self.n_components_ = self.fit_.n_components
        self.coef_ = self.fit_.coefficients
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def decision_proba(self, X):
        check_is_fitted(self, "fit_")
        W, sample, _ = self._unpack(X)
        scores = self.fpca_.project(sample.values, self.n_components_)
        design = np.column_stack([np.ones(len(W)), W, scores])
        return clip_propensity(expit(design @ self.coef_))


class FGAMPropensity(_FunctionalClassifierBase):
    """Scikit-learn wrapper around :func:`fit_fgam`."""

    def __init__(self, n_scalar=0, n_basis=FGAM_BASIS_SIZE, grid_points=None):
        self.n_scalar = n_scalar
        self.n_basis = n_basis
        self.grid_points = grid_points

    def fit(self, X, y):
        W, sample, y = self._unpack(X, y)
        T = self._set_classes(y)
        self.fit_ = fit_fgam(W, sample, T, self.n_basis)
        self.feature_map_ = FgamFeatureMap.for_sample(sample, self.n_basis)
        self.coef_ = self.fit_.coefficients
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def decision_proba(self, X):
        check_is_fitted(self, "fit_")
        W, sample, _ = self._unpack(X)
        design = np.column_stack([np.ones(len(W)), W, self.feature_map_.transform(sample)])
        return clip_propensity(expit(design @ self.coef_))
