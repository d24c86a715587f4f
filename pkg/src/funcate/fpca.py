"""Functional principal component analysis on a dense common grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_scalar_covariates, check_treatment
from .exceptions import (
    InsufficientComponentsError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidSelectionError,
)
from .funcdata import Grid, GridFunctionSample, center_sample, trapezoid_grid
from .logistic import fit_logistic_mle

EIGEN_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Mean, eigen-pairs and scores of a fitted sample.

    ``eigenfunctions`` has one row per component; ``scores[i, k]`` is the grid
    inner product of the centered trajectory ``i`` with eigenfunction ``k``.
    """

    grid: Grid
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    fve_cumulative: np.ndarray

    @property
    def n_components(self) -> int:
        return self.eigenvalues.shape[0]

    def project(self, values, n_components: int | None = None) -> np.ndarray:
        """Scores of new trajectories on the leading eigenfunctions."""
        values = np.asarray(values, dtype=float)
        phi = self.eigenfunctions[:n_components]
        return (values - self.mean) @ (phi * self.grid.weights).T

    def reconstruct(self, n_components: int | None = None) -> np.ndarray:
        k = self.n_components if n_components is None else n_components
        return self.mean + self.scores[:, :k] @ self.eigenfunctions[:k]


def fit_fpca(sample: GridFunctionSample, max_components: int | None = None) -> FpcaModel:
    """Eigen-decompose the sample covariance operator (divisor ``n``).

    The discretized operator ``C W`` is symmetrized as ``W^{1/2} C W^{1/2}``;
    eigenvectors are mapped back by ``W^{-1/2}`` so that eigenfunctions are
    orthonormal under the grid inner product. Modes with eigenvalue at or
    below ``1e-12`` times the largest are discarded. Each eigenfunction is
    signed so its largest-magnitude entry is positive.
    """
    n, m = sample.values.shape
    if n < 2:
        raise InsufficientDataError("FPCA needs at least 2 trajectories")
    limit = min(n - 1, m)
    if max_components is None:
        max_components = limit
    if int(max_components) != max_components or not 1 <= max_components <= limit:
        raise InvalidArgumentError(f"max_components must be in [1, {limit}], got {max_components}")

    centered, mean = center_sample(sample)
    Xc = centered.values
    cov = Xc.T @ Xc / n
    if not np.all(np.isfinite(cov)):
        raise InvalidArgumentError("sample covariance is not finite")

    w = sample.grid.weights
    sw = np.sqrt(w)
    vals, vecs = np.linalg.eigh(sw[:, None] * cov * sw[None, :])
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]

    energy = float(np.sum(w * np.mean(sample.values**2, axis=0)))
    if vals[0] <= EIGEN_FLOOR * energy or vals[0] <= 0:
        raise InsufficientComponentsError("functional covariate has no variation after centering")
    keep = np.flatnonzero(vals > EIGEN_FLOOR * vals[0])[: int(max_components)]
    vals = vals[keep]
    phi = (vecs[:, keep] / sw[:, None]).T
    phi /= np.sqrt(np.sum(w * phi**2, axis=1))[:, None]
    peak = np.argmax(np.abs(phi), axis=1)
    signs = np.sign(phi[np.arange(phi.shape[0]), peak])
    phi *= signs[:, None]

    scores = Xc @ (phi * w).T
    for arr in (vals, phi, scores):
        arr.setflags(write=False)
    fve = np.cumsum(vals) / np.sum(vals)
    fve[-1] = 1.0
    fve.setflags(write=False)
    return FpcaModel(sample.grid, mean, vals, phi, scores, fve)


def select_by_fve(model: FpcaModel, threshold: float = 0.95) -> int:
    """Smallest ``L`` whose cumulative fraction of variance explained reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"FVE threshold must be in (0, 1), got {threshold}")
    if model.n_components < 1:
        raise InsufficientComponentsError("model has no components")
    hits = np.flatnonzero(model.fve_cumulative >= threshold - 1e-12)
    return int(hits[0]) + 1


def aic_stop_index(aic_values) -> int:
    """Apply the sequential AIC stopping rule.

    ``aic_values[j]`` is the AIC with the first ``j`` scores included
    (``j = 0 .. K``). Returns the smallest ``j >= 1`` with
    ``aic_values[j + 1] >= aic_values[j]``, or ``K`` if AIC keeps decreasing.
    """
    aic = list(aic_values)
    K = len(aic) - 1
    if K < 1:
        raise InvalidArgumentError("need AIC values for at least one component")
    for j in range(1, K):
        if aic[j + 1] >= aic[j]:
            return j
    return K


def select_by_aic(scores, W, T) -> int:
    """Choose ``L`` by adding leading scores to the logistic propensity model until AIC stops decreasing."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[1] < 1:
        raise InvalidArgumentError("scores must be an n x K matrix with K >= 1")
    n, K = scores.shape
    T = check_treatment(T, n)
    W = check_scalar_covariates(W, n)
    base = np.column_stack([np.ones(n), W])

    cache: dict[int, float] = {}

    def aic(j: int) -> float:
        if j not in cache:
            fit = fit_logistic_mle(np.column_stack([base, scores[:, :j]]), T)
            cache[j] = fit.aic()
        return cache[j]

    for j in range(1, K):
        if aic(j + 1) >= aic(j):
            return j
    return K


@dataclass(frozen=True)
class Selection:
    """Truncation rule for the number of FPC scores.

    ``rule`` is ``"fve"`` (``value`` = threshold), ``"aic"`` or ``"fixed"``
    (``value`` = number of components).
    """

    rule: str = "fve"
    value: float | int | None = 0.95

    def __post_init__(self):
        if self.rule == "fve":
            if self.value is None or not 0.0 < float(self.value) < 1.0:
                raise InvalidArgumentError(f"FVE threshold must be in (0, 1), got {self.value}")
        elif self.rule == "fixed":
            if self.value is None or int(self.value) != self.value:
                raise InvalidArgumentError(f"fixed selection needs an integer, got {self.value}")
        elif self.rule != "aic":
            raise InvalidArgumentError(f"unknown selection rule {self.rule!r}")

    @classmethod
    def fve(cls, threshold: float = 0.95) -> "Selection":
        return cls("fve", threshold)

    @classmethod
    def aic(cls) -> "Selection":
        return cls("aic", None)

    @classmethod
    def fixed(cls, n_components: int) -> "Selection":
        return cls("fixed", n_components)

    @classmethod
    def parse(cls, text: str) -> "Selection":
        """Parse ``"fve:0.95"``, ``"aic"`` or ``"fixed:4"``."""
        head, _, tail = text.strip().lower().partition(":")
        try:
            if head == "aic" and not tail:
                return cls.aic()
            if head == "fve":
                return cls.fve(float(tail) if tail else 0.95)
            if head == "fixed":
                return cls.fixed(int(tail))
        except ValueError as exc:
            raise InvalidArgumentError(f"cannot parse selection {text!r}") from exc
        raise InvalidArgumentError(f"cannot parse selection {text!r}")

    def __str__(self) -> str:
        return self.rule if self.rule == "aic" else f"{self.rule}:{self.value}"

    def choose(self, model: FpcaModel, W=None, T=None) -> int:
        if self.rule == "fve":
            L = select_by_fve(model, float(self.value))
        elif self.rule == "aic":
            if T is None:
                raise InvalidArgumentError("AIC selection needs the treatment vector")
            L = select_by_aic(model.scores, W, T)
        else:
            L = int(self.value)
            if L > model.n_components:
                raise InvalidSelectionError(
                    f"requested {L} components but only {model.n_components} are available"
                )
        if L < 1:
            raise InvalidSelectionError("selection rule chose no functional components")
        return L


def as_selection(selection) -> Selection:
    if isinstance(selection, Selection):
        return selection
    if isinstance(selection, str):
        return Selection.parse(selection)
    if isinstance(selection, (int, np.integer)) and not isinstance(selection, bool):
        return Selection.fixed(int(selection))
    if isinstance(selection, float):
        return Selection.fve(selection)
    raise InvalidArgumentError(f"cannot interpret selection {selection!r}")


class FPCA(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer mapping grid trajectories to FPC scores.

    Parameters
    ----------
    n_components : int or None
        Fixed number of scores to output. ``None`` defers to ``fve_threshold``.
    fve_threshold : float
        Fraction of variance explained used when ``n_components`` is None.
    grid_points : array-like or None
        Grid on [0, 1] matching the columns of ``X``; equally spaced if None.
    """

    def __init__(self, n_components=None, fve_threshold=0.95, grid_points=None):
        self.n_components = n_components
        self.fve_threshold = fve_threshold
        self.grid_points = grid_points

    def _grid(self, m: int) -> Grid:
        if self.grid_points is None:
            return trapezoid_grid(m)
        return Grid.from_points(self.grid_points)

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        self.model_ = fit_fpca(GridFunctionSample(self._grid(X.shape[1]), X))
        if self.n_components is None:
            self.n_components_ = select_by_fve(self.model_, self.fve_threshold)
        else:
            self.n_components_ = Selection.fixed(self.n_components).choose(self.model_)
        self.eigenvalues_ = self.model_.eigenvalues[: self.n_components_]
        self.components_ = self.model_.eigenfunctions[: self.n_components_]
        self.mean_ = self.model_.mean
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} grid columns, expected {self.n_features_in_}")
        return self.model_.project(X, self.n_components_)
