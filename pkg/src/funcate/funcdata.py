"""Functional observations on a shared grid over [0, 1].

Integrals over the domain are replaced by quadrature on the stored grid; the
default is the composite trapezoid rule on equally spaced points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientDataError, InvalidArgumentError

DEFAULT_GRID_POINTS = 101


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def trapezoid_weights(points) -> np.ndarray:
    """Composite trapezoid weights for a (possibly non-uniform) ordered grid."""
    t = np.asarray(points, dtype=float)
    h = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points on [0, 1] together with quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if t.ndim != 1 or t.shape != w.shape:
            raise InvalidArgumentError("grid points and weights must be 1-d arrays of equal length")
        if t.shape[0] < 3:
            raise InvalidArgumentError("a grid needs at least 3 points")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("grid points must be finite and strictly increasing")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise InvalidArgumentError("grid must start at 0 and end at 1")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("quadrature weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", _frozen(t))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_points(cls, points) -> "Grid":
        """Build a grid with trapezoid weights taken from local spacings.

        Points that are exactly equally spaced get the same weights as
        :func:`trapezoid_grid`, so a grid read back from text is identical to
        the one it was written from.
        """
        t = np.asarray(points, dtype=float)
        if t.ndim == 1 and t.shape[0] >= 3 and np.array_equal(t, np.linspace(0.0, 1.0, t.shape[0])):
            return trapezoid_grid(t.shape[0])
        return cls(t, trapezoid_weights(t))

    def __len__(self) -> int:
        return self.points.shape[0]

    def integrate(self, values) -> np.ndarray:
        """Quadrature along the last axis of ``values``."""
        return np.asarray(values, dtype=float) @ self.weights


def trapezoid_grid(num_points: int = DEFAULT_GRID_POINTS) -> Grid:
    """Equally spaced grid on [0, 1] with weights ``(h/2, h, ..., h, h/2)``.

    >>> trapezoid_grid(3).weights.tolist()
    [0.25, 0.5, 0.25]
    """
    if int(num_points) != num_points or num_points < 3:
        raise InvalidArgumentError(f"num_points must be an integer >= 3, got {num_points}")
    num_points = int(num_points)
    h = 1.0 / (num_points - 1)
    points = np.linspace(0.0, 1.0, num_points)
    weights = np.full(num_points, h)
    weights[0] = weights[-1] = h / 2
    return Grid(points, weights)


def inner_product(f, g, grid: Grid) -> float:
    """Quadrature approximation of the L2 inner product of two grid functions."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    m = len(grid)
    if f.shape != (m,) or g.shape != (m,):
        raise InvalidArgumentError(
            f"grid functions must have shape ({m},), got {f.shape} and {g.shape}"
        )
    return float(np.sum(grid.weights * (f * g)))


@dataclass(frozen=True, eq=False)
class GridFunctionSample:
    """``n`` trajectories evaluated on a shared grid (row ``i`` is subject ``i``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidArgumentError(f"values must be an n x m matrix, got shape {v.shape}")
        if v.shape[1] != len(self.grid):
            raise InvalidArgumentError(
                f"values have {v.shape[1]} columns but the grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("functional values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    def take(self, indices) -> "GridFunctionSample":
        """Subset (or resample) subjects by row index."""
        return GridFunctionSample(self.grid, self.values[np.asarray(indices)])


def center_sample(sample: GridFunctionSample) -> tuple[GridFunctionSample, np.ndarray]:
    """Subtract the pointwise sample mean; returns the centered sample and the mean."""
    if sample.n_subjects < 2:
        raise InsufficientDataError("centering needs at least 2 trajectories")
    mean = sample.values.mean(axis=0)
    centered = sample.values - mean
    # A second pass removes the O(eps) residual mean left by the first.
    centered = centered - centered.mean(axis=0)
    return GridFunctionSample(sample.grid, centered), _frozen(mean)
