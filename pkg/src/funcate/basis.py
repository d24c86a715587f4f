"""Fourier and cubic B-spline bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

SQRT2 = np.sqrt(2.0)


def fourier(k: int, t):
    """Orthonormal Fourier function with 1-based index ``k`` on [0, 1].

    Index ``2j - 1`` is ``sqrt(2) cos(2 pi j t)`` and index ``2j`` is
    ``sqrt(2) sin(2 pi j t)``.
    """
    if int(k) != k or k < 1:
        raise InvalidArgumentError(f"Fourier index must be a positive integer, got {k}")
    k = int(k)
    freq = (k + 1) // 2
    arg = 2.0 * np.pi * freq * np.asarray(t, dtype=float)
    return SQRT2 * (np.cos(arg) if k % 2 == 1 else np.sin(arg))


def fourier_matrix(num_functions: int, t) -> np.ndarray:
    """Rows are Fourier functions ``1..num_functions`` evaluated at ``t``."""
    return np.vstack([fourier(k, t) for k in range(1, num_functions + 1)])


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped B-spline basis with equally spaced interior knots on ``[lower, upper]``.

    Parameters
    ----------
    n_interior_knots : int
        Number of interior knots; the basis has ``n_interior_knots + degree + 1``
        functions.
    lower, upper : float
        Domain end points.
    degree : int
        Polynomial degree, 3 for cubic splines.
    """

    n_interior_knots: int = 3
    lower: float = 0.0
    upper: float = 1.0
    degree: int = 3

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper <= self.lower:
            raise InvalidArgumentError(
                f"B-spline domain must be a nondegenerate interval, got [{self.lower}, {self.upper}]"
            )
        if self.degree < 0 or self.n_interior_knots < 0:
            raise InvalidArgumentError("degree and knot count must be nonnegative")

    @classmethod
    def with_size(cls, n_basis: int, lower: float = 0.0, upper: float = 1.0, degree: int = 3):
        return cls(n_basis - degree - 1, lower, upper, degree)

    @property
    def n_basis(self) -> int:
        return self.n_interior_knots + self.degree + 1

    @property
    def knots(self) -> np.ndarray:
        interior = np.linspace(self.lower, self.upper, self.n_interior_knots + 2)[1:-1]
        return np.concatenate(
            [np.full(self.degree + 1, self.lower), interior, np.full(self.degree + 1, self.upper)]
        )

    def __call__(self, x) -> np.ndarray:
        return bspline_eval(self, x)


def bspline_eval(basis: BSplineBasis, x) -> np.ndarray:
    """Evaluate all basis functions at ``x`` by the Cox-de Boor recursion.

    Inputs outside the domain are clamped to it. A scalar ``x`` gives a vector
    of length ``n_basis``; an array gives shape ``x.shape + (n_basis,)``.
    """
    x = np.asarray(x, dtype=float)
    flat = np.clip(x.ravel(), basis.lower, basis.upper)
    knots = basis.knots
    p = basis.degree

    # degree 0: half-open spans; the right end point belongs to the last nonempty span
    left = knots[:-1]
    right = knots[1:]
    B = ((flat[:, None] >= left) & (flat[:, None] < right)).astype(float)
    last_span = np.flatnonzero(right > left)[-1]
    B[flat == basis.upper, :] = 0.0
    B[flat == basis.upper, last_span] = 1.0

    for d in range(1, p + 1):
        n_fun = len(knots) - d - 1
        out = np.zeros((flat.shape[0], n_fun))
        for i in range(n_fun):
            den1 = knots[i + d] - knots[i]
            den2 = knots[i + d + 1] - knots[i + 1]
            if den1 > 0:
                out[:, i] += (flat - knots[i]) / den1 * B[:, i]
            if den2 > 0:
                out[:, i] += (knots[i + d + 1] - flat) / den2 * B[:, i + 1]
        B = out
    return B.reshape(x.shape + (basis.n_basis,))


def tensor_row(bt, bx) -> np.ndarray:
    """Row-major flattened outer product; entry ``(j, l)`` is ``bt[j] * bx[l]``."""
    bt = np.asarray(bt, dtype=float)
    bx = np.asarray(bx, dtype=float)
    if bt.ndim != 1 or bt.shape != bx.shape:
        raise InvalidArgumentError(f"tensor_row needs equal-length vectors, got {bt.shape} and {bx.shape}")
    return np.outer(bt, bx).ravel()
