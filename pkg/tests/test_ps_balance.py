import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import expit

from funcate.basis import fourier_matrix
from funcate.exceptions import InsufficientComponentsError, InvalidArgumentError, SingularDesignError
from funcate.funcdata import GridFunctionSample
from funcate.logistic import fit_logistic_mle
from funcate.ps_balance import (
    DEFAULT_LAMBDA_GRID,
    SubstituteCovariate,
    _solve_balance,
    balance_equations,
    balance_residual,
    build_substitute,
    fit_cbps,
    fit_kernel_balance,
    moment_features,
    sobolev_gram,
    sobolev_kernel,
    solve_arm_weights,
)
from funcate.simgen import run_rng, simulate_dataset

unit = st.floats(0.0, 1.0)


def _substitute(d):
    return build_substitute(d.W, d.sample, 0.95)


# substitute covariate


def test_substitute_rank_two(grid101, rng):
    phi = fourier_matrix(2, grid101.points)
    sample = GridFunctionSample(grid101, rng.normal(size=(30, 2)) @ phi)
    for thr in (0.95, 0.99):
        sub = build_substitute(None, sample, thr)
        assert sub.C.shape == (30, 2) and sub.n_scalar == 0 and sub.n_scores == 2


def test_substitute_dgp_columns():
    widths = [_substitute(simulate_dataset(1, 1, 500, run_rng(41, r)).data).C.shape[1] for r in range(40)]
    assert sum(w == 7 for w in widths) >= 36


def test_substitute_degenerate(grid101, rng):
    with pytest.raises(InsufficientComponentsError):
        build_substitute(rng.normal(size=(20, 2)), GridFunctionSample(grid101, np.zeros((20, 101))))


def test_substitute_scaling():
    sub = SubstituteCovariate.from_matrix(np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]]))
    np.testing.assert_allclose(sub.scaled(), [[0.0, 0.5], [1.0, 0.5], [0.5, 0.5]])


def test_moment_features():
    C = np.array([[1.0, -2.0], [3.0, 0.5]])
    np.testing.assert_array_equal(moment_features(C, 1), C)
    np.testing.assert_array_equal(moment_features(C, 2), [[1, -2, 1, 4], [3, 0.5, 9, 0.25]])
    with pytest.raises(InvalidArgumentError):
        moment_features(C, 3)


# CBPS


def test_intercept_only_closed_form():
    T = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], dtype=float)
    H = np.ones((10, 1))
    gamma = _solve_balance(H, T, np.zeros(1), 200, 1e-12)
    assert expit(gamma[0]) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_cbps_balances_moments(psm1_data, order):
    d = psm1_data
    sub = _substitute(d)
    fit = fit_cbps(sub, d.T, order)
    assert fit.converged and fit.balance_residual < 1e-6
    H = np.column_stack([np.ones(d.n), moment_features(sub.C, order)])
    p, T = expit(H @ fit.coefficients), d.T
    wt, wc = T / p, (1 - T) / (1 - p)
    first = (wt - wc) @ sub.C / d.n
    assert np.max(np.abs(first)) < 1e-6
    if order == 2:
        assert np.max(np.abs((wt - wc) @ sub.C**2 / d.n)) < 1e-6


def test_cbps_improves_on_mle_balance(psm1_data):
    d = psm1_data
    sub = _substitute(d)
    H = np.column_stack([np.ones(d.n), sub.C])
    mle = fit_logistic_mle(H, d.T)
    mle_resid = np.max(np.abs(balance_residual(mle.fitted, d.T, H)))
    assert fit_cbps(sub, d.T, 1).balance_residual <= mle_resid


def test_cbps_rank_deficient(rng):
    c = rng.normal(size=50)
    sub = SubstituteCovariate.from_matrix(np.column_stack([c, 2 * c]))
    with pytest.raises(SingularDesignError):
        fit_cbps(sub, rng.integers(0, 2, 50), 1)


def test_cbps_over_identified(psm1_data):
    d = psm1_data
    sub = _substitute(d)
    over = fit_cbps(sub, d.T, 1, identification="over")
    exact = fit_cbps(sub, d.T, 1)
    assert over.method == "CBPS1" and over.n_components == 4
    assert np.all((over.propensities >= 1e-6) & (over.propensities <= 1 - 1e-6))
    # over-identification trades exact balance for likelihood fit
    assert over.balance_residual > exact.balance_residual
    with pytest.raises(InvalidArgumentError):
        fit_cbps(sub, d.T, 1, identification="both")


def test_balance_equations_agree_with_residual(rng):
    H = np.column_stack([np.ones(30), rng.normal(size=(30, 2))])
    T = rng.integers(0, 2, 30).astype(float)
    eta = rng.normal(size=30)
    np.testing.assert_allclose(balance_equations(eta, T, H), balance_residual(expit(eta), T, H), atol=1e-12)


# kernel


def _bernoulli_kernel(s, t):
    # k_r(x) = B_r(x) / r! with Bernoulli polynomials B_1, B_2, B_4
    b1 = lambda x: x - 0.5  # noqa: E731
    b2 = lambda x: x * x - x + 1 / 6  # noqa: E731
    b4 = lambda x: x**4 - 2 * x**3 + x**2 - 1 / 30  # noqa: E731
    return 1 + b1(s) * b1(t) + b2(s) * b2(t) / 4 - b4(abs(s - t)) / 24


def test_kernel_center_value():
    assert sobolev_kernel([0.5], [0.5]) == pytest.approx(1 + 1 / 576 + 1 / 720, abs=1e-15)


@given(unit, unit)
def test_kernel_bernoulli_oracle(s, t):
    assert sobolev_kernel([s], [t]) == pytest.approx(_bernoulli_kernel(s, t), abs=1e-13)


def test_kernel_range():
    with pytest.raises(InvalidArgumentError):
        sobolev_kernel([1.2], [0.3])
    with pytest.raises(InvalidArgumentError):
        sobolev_gram(np.array([[-0.1, 0.2]]))


@given(arrays(np.float64, 3, elements=unit), arrays(np.float64, 3, elements=unit))
def test_kernel_symmetric(u, v):
    assert sobolev_kernel(u, v) == sobolev_kernel(v, u)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_gram_psd(seed, d):
    U = np.random.default_rng(seed).random((20, d))
    K = sobolev_gram(U)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-10


def test_gram_matches_pointwise(rng):
    U, V = rng.random((4, 3)), rng.random((5, 3))
    K = sobolev_gram(U, V)
    for i in range(4):
        for j in range(5):
            assert K[i, j] == pytest.approx(sobolev_kernel(U[i], V[j]), abs=1e-14)


def test_kbcb_randomized_weights_near_uniform():
    r = np.random.default_rng(5)
    n = 600
    C = r.normal(size=(n, 3))
    T = r.integers(0, 2, n)
    res = fit_kernel_balance(SubstituteCovariate.from_matrix(C), T, lambda_grid=(1e-4,))
    n1 = T.sum()
    target = n / n1
    assert abs(np.median(res.treated_weights[T == 1]) / target - 1) < 0.25
    assert abs(np.median(res.control_weights[T == 0]) / (n / (n - n1)) - 1) < 0.25


def test_kbcb_constant_features():
    n = 30
    T = np.array([1, 0, 0] * 10)
    res = fit_kernel_balance(SubstituteCovariate.from_matrix(np.ones((n, 2))), T)
    assert abs(res.treated_weights.sum() / n - 1) < 1e-3
    assert abs(res.control_weights.sum() / n - 1) < 1e-3


def test_kbcb_large_penalty(rng):
    n = 40
    K = sobolev_gram(rng.random((n, 2)))
    T = rng.integers(0, 2, n).astype(bool)
    sol = solve_arm_weights(K, T, 1e6)
    assert np.max(sol.weights) < 1e-4
    assert sol.imbalance == pytest.approx(K.sum() / n**2, rel=1e-4)


@given(st.integers(0, 10_000), st.sampled_from(DEFAULT_LAMBDA_GRID))
def test_kbcb_objective_monotone(seed, lam):
    r = np.random.default_rng(seed)
    n = 25
    K = sobolev_gram(r.random((n, 3)))
    T = r.random(n) < 0.4
    if T.sum() == 0:
        T[0] = True
    sol = solve_arm_weights(K, T, lam, max_iter=300, keep_trace=True)
    assert np.all(np.diff(sol.trace) <= 0.0)
    assert np.all(sol.weights >= 0) and np.all(sol.weights[~T] == 0)
    assert sol.objective == pytest.approx(sol.imbalance + sol.penalty, rel=1e-12)


def test_kbcb_objective_value(rng):
    # J(w) recomputed from its definition
    n = 20
    K = sobolev_gram(rng.random((n, 2)))
    T = rng.random(n) < 0.5
    sol = solve_arm_weights(K, T, 0.01, max_iter=50)
    a = np.where(T, sol.weights, 0.0) / n
    b = np.full(n, 1.0 / n)
    J = (a - b) @ K @ (a - b) + 0.01 / n * np.sum(sol.weights**2)
    assert sol.objective == pytest.approx(J, rel=1e-10)


def test_kbcb_result_invariants(psm1_data):
    d = psm1_data
    res = fit_kernel_balance(_substitute(d), d.T)
    T = d.T.astype(bool)
    assert np.all(res.treated_weights >= 0) and np.all(res.control_weights >= 0)
    assert np.all(res.treated_weights[~T] == 0) and np.all(res.control_weights[T] == 0)
    assert res.lambda_treated in DEFAULT_LAMBDA_GRID and res.lambda_control in DEFAULT_LAMBDA_GRID
    fit = res.as_propensity_fit(4)
    assert fit.propensities is None and fit.method == "KBCB"


def test_kbcb_permutation_invariant(rng):
    n = 60
    C = rng.normal(size=(n, 2))
    T = rng.integers(0, 2, n)
    perm = rng.permutation(n)
    a = fit_kernel_balance(SubstituteCovariate.from_matrix(C), T, (1e-2,))
    b = fit_kernel_balance(SubstituteCovariate.from_matrix(C[perm]), T[perm], (1e-2,))
    np.testing.assert_allclose(b.treated_weights, a.treated_weights[perm], rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(b.control_weights, a.control_weights[perm], rtol=1e-5, atol=1e-6)


def test_kbcb_preconditions(rng):
    sub = SubstituteCovariate.from_matrix(rng.normal(size=(12, 2)))
    with pytest.raises(InvalidArgumentError):
        fit_kernel_balance(sub, np.ones(12))
    with pytest.raises(InvalidArgumentError):
        fit_kernel_balance(SubstituteCovariate.from_matrix(rng.normal(size=(8, 2))), [0, 1] * 4)
    with pytest.raises(InvalidArgumentError):
        fit_kernel_balance(sub, [0, 1] * 6, lambda_grid=(0.0,))
