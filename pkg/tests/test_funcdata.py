import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from funcate.exceptions import InsufficientDataError, InvalidArgumentError
from funcate.funcdata import Grid, GridFunctionSample, center_sample, inner_product, trapezoid_grid

M = 21
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
grid_fn = arrays(np.float64, M, elements=finite)


def test_three_point_grid():
    g = trapezoid_grid(3)
    np.testing.assert_array_equal(g.points, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(g.weights, [0.25, 0.5, 0.25])


def test_weights_partition_unity():
    assert abs(trapezoid_grid(101).weights.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("m", [2, 0, -3, 2.5])
def test_too_few_points(m):
    with pytest.raises(InvalidArgumentError):
        trapezoid_grid(m)


def test_grid_rejects_bad_endpoints():
    with pytest.raises(InvalidArgumentError):
        Grid.from_points([0.0, 0.5, 0.9])
    with pytest.raises(InvalidArgumentError):
        Grid.from_points([0.0, 0.6, 0.5, 1.0])


def test_nonuniform_grid_weights():
    g = Grid.from_points([0.0, 0.1, 0.4, 1.0])
    np.testing.assert_allclose(g.weights, [0.05, 0.2, 0.45, 0.3])
    # trapezoid is exact for linear functions
    assert g.integrate(3.0 * g.points + 1.0) == pytest.approx(2.5, abs=1e-14)


def test_grid_arrays_read_only():
    g = trapezoid_grid(5)
    with pytest.raises(ValueError):
        g.points[0] = 0.3


def test_cosine_normalized(grid101):
    t = grid101.points
    f = np.sqrt(2) * np.cos(2 * np.pi * t)
    assert abs(inner_product(f, f, grid101) - 1.0) < 1e-4


def test_cosine_sine_orthogonal(grid101):
    t = grid101.points
    f = np.sqrt(2) * np.cos(2 * np.pi * t)
    g = np.sqrt(2) * np.sin(2 * np.pi * t)
    assert abs(inner_product(f, g, grid101)) < 1e-4


def test_zero_function_exact(grid101):
    assert inner_product(np.zeros(101), np.linspace(-5, 5, 101), grid101) == 0.0


def test_inner_product_length_mismatch(grid101):
    with pytest.raises(InvalidArgumentError):
        inner_product(np.ones(100), np.ones(101), grid101)


def test_center_identical_rows():
    g = trapezoid_grid(5)
    r = np.array([1.0, -2.0, 0.5, 3.0, 7.0])
    centered, mean = center_sample(GridFunctionSample(g, np.vstack([r, r])))
    np.testing.assert_array_equal(centered.values, 0.0)
    np.testing.assert_array_equal(mean, r)


def test_center_symmetric_rows():
    g = trapezoid_grid(5)
    r = np.array([1.0, -2.0, 0.5, 3.0, 7.0])
    centered, mean = center_sample(GridFunctionSample(g, np.vstack([r, -r])))
    np.testing.assert_array_equal(centered.values, np.vstack([r, -r]))
    np.testing.assert_array_equal(mean, 0.0)


def test_center_single_row():
    with pytest.raises(InsufficientDataError):
        center_sample(GridFunctionSample(trapezoid_grid(5), np.ones((1, 5))))


def test_sample_validation():
    g = trapezoid_grid(5)
    with pytest.raises(InvalidArgumentError):
        GridFunctionSample(g, np.ones((3, 4)))
    with pytest.raises(InvalidArgumentError):
        GridFunctionSample(g, np.array([[1, 2, np.nan, 4, 5.0]]))


@given(grid_fn)
def test_inner_product_nonnegative(f):
    assert inner_product(f, f, trapezoid_grid(M)) >= 0.0


@given(grid_fn, grid_fn, grid_fn, finite)
def test_inner_product_bilinear(f, g, h, a):
    grid = trapezoid_grid(M)
    lhs = inner_product(a * f + g, h, grid)
    rhs = a * inner_product(f, h, grid) + inner_product(g, h, grid)
    scale = max(1.0, abs(a) * np.sum(np.abs(f * h)) + np.sum(np.abs(g * h)))
    # absolute 1e-12 at unit scale; relative for large magnitudes
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(grid_fn, grid_fn)
def test_inner_product_symmetric(f, g):
    grid = trapezoid_grid(M)
    assert inner_product(f, g, grid) == inner_product(g, f, grid)


@given(arrays(np.float64, (6, M), elements=finite))
def test_center_idempotent(values):
    s = GridFunctionSample(trapezoid_grid(M), values)
    once, _ = center_sample(s)
    twice, _ = center_sample(once)
    scale = max(1.0, np.abs(values).max())
    assert np.max(np.abs(twice.values - once.values)) <= 1e-12 * scale
    assert np.max(np.abs(once.values.mean(axis=0))) <= 1e-12 * scale


def test_uniform_points_give_canonical_grid():
    g = Grid.from_points(np.linspace(0, 1, 101))
    np.testing.assert_array_equal(g.weights, trapezoid_grid(101).weights)
