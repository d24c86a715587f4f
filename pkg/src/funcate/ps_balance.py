"""Covariate balancing on the FPC-score substitute of the functional covariate.

Two routes are provided. :func:`fit_cbps` solves the just-identified
balancing equations for a logistic propensity model; :func:`fit_kernel_balance`
finds nonnegative weights that minimize worst-case imbalance over the unit
ball of a second-order Sobolev RKHS plus a squared-weight penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ._validation import check_both_arms, check_scalar_covariates, check_treatment
from .exceptions import (
    BalanceNotAttainedError,
    InvalidArgumentError,
    SeparationError,
    SingularDesignError,
)
from .fpca import FpcaModel, Selection, as_selection, fit_fpca
from .funcdata import GridFunctionSample
from .logistic import fit_logistic_mle
from .ps_direct import PropensityFit, clip_propensity

DEFAULT_LAMBDA_GRID = tuple(10.0**k for k in range(-6, 1))
CBPS_TOL = 1e-8
CBPS_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class SubstituteCovariate:
    """``C = [W | A_1 .. A_L]`` with per-column ranges for kernel scaling."""

    C: np.ndarray
    n_scalar: int
    n_scores: int
    col_min: np.ndarray
    col_max: np.ndarray
    fpca: FpcaModel | None = field(default=None, repr=False)

    @classmethod
    def from_matrix(cls, C, n_scalar: int = 0, fpca: FpcaModel | None = None):
        C = np.asarray(C, dtype=float)
        if C.ndim != 2 or C.shape[1] == 0:
            raise InvalidArgumentError("substitute covariate must be a nonempty matrix")
        return cls(C, n_scalar, C.shape[1] - n_scalar, C.min(axis=0), C.max(axis=0), fpca)

    @property
    def n_subjects(self) -> int:
        return self.C.shape[0]

    def scaled(self) -> np.ndarray:
        """Min-max scale each column to [0, 1]; constant columns map to 0.5."""
        span = self.col_max - self.col_min
        out = np.full(self.C.shape, 0.5)
        ok = span > 0
        out[:, ok] = (self.C[:, ok] - self.col_min[ok]) / span[ok]
        return np.clip(out, 0.0, 1.0)


def build_substitute(
    W,
    sample: GridFunctionSample,
    selection: Selection | str | float | int = 0.95,
    T=None,
    fpca: FpcaModel | None = None,
) -> SubstituteCovariate:
    """Assemble ``C`` from the scalar covariates and the leading FPC scores."""
    n = sample.n_subjects
    W = check_scalar_covariates(W, n)
    model = fpca if fpca is not None else fit_fpca(sample)
    L = as_selection(selection).choose(model, W, T)
    return SubstituteCovariate.from_matrix(np.column_stack([W, model.scores[:, :L]]), W.shape[1], model)


def moment_features(C, moment_order: int) -> np.ndarray:
    """``h(C)``: the columns of ``C``, plus their squares when ``moment_order == 2``."""
    if moment_order not in (1, 2):
        raise InvalidArgumentError(f"moment_order must be 1 or 2, got {moment_order}")
    C = np.asarray(C, dtype=float)
    return C if moment_order == 1 else np.column_stack([C, C**2])


def balance_equations(eta, T, H) -> np.ndarray:
    """``(1/n) sum_i {T_i/p_i - (1-T_i)/(1-p_i)} H_i`` with ``p = expit(eta)``."""
    eta = np.clip(eta, -700, 700)
    r = T * (1.0 + np.exp(-eta)) - (1.0 - T) * (1.0 + np.exp(eta))
    return H.T @ r / H.shape[0]


def balance_residual(p, T, H) -> np.ndarray:
    """Balancing equations evaluated at given propensities."""
    p = np.asarray(p, dtype=float)
    r = T / p - (1.0 - T) / (1.0 - p)
    return np.asarray(H).T @ r / len(p)


def fit_cbps(
    sub: SubstituteCovariate,
    T,
    moment_order: int = 1,
    *,
    identification: str = "exact",
    max_iter: int = CBPS_MAX_ITER,
    tol: float = CBPS_TOL,
) -> PropensityFit:
    """Covariate balancing propensity score.

    The logistic index uses ``[1 | h(C)]`` and the same columns are balanced.

    With ``identification="exact"`` the balancing equations are solved
    exactly (as many equations as parameters) by damped Newton with
    backtracking on ``||G||^2``, started from the plain logistic MLE (or zero
    if that fit is separated). ``identification="over"`` instead minimizes the
    continuous-updating GMM criterion that stacks the likelihood score with
    the balancing conditions; balance then holds only approximately.
    """
    n = sub.n_subjects
    T = check_treatment(T, n)
    check_both_arms(T)
    H = np.column_stack([np.ones(n), moment_features(sub.C, moment_order)])
    try:
        start = fit_logistic_mle(H, T).coefficients
    except SeparationError:
        start = np.zeros(H.shape[1])

    if identification == "exact":
        gamma = _solve_balance(H, T, start, max_iter, tol)
        converged = True
    elif identification == "over":
        gamma, converged = _solve_gmm(H, T, start)
    else:
        raise InvalidArgumentError(f"identification must be 'exact' or 'over', got {identification!r}")

    # residual of the solved system, i.e. before the propensities are clipped
    resid = float(np.max(np.abs(balance_equations(H @ gamma, T, H))))
    p = clip_propensity(expit(H @ gamma))
    return PropensityFit(
        method=f"CBPS{moment_order}",
        propensities=p,
        converged=converged,
        balance_residual=resid,
        n_components=sub.n_scores,
        coefficients=gamma,
    )


def _solve_balance(H, T, gamma, max_iter, tol) -> np.ndarray:
    n = H.shape[0]
    G = balance_equations(H @ gamma, T, H)
    f = G @ G
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while np.max(np.abs(G)) >= tol:
            if it >= max_iter:
                raise BalanceNotAttainedError(
                    f"balancing equations not solved after {it} Newton steps "
                    f"(max residual {np.max(np.abs(G)):.3g})"
                )
            it += 1
            eta = np.clip(H @ gamma, -700, 700)
            v = T * np.exp(-eta) + (1.0 - T) * np.exp(eta)
            jac = -(H * v[:, None]).T @ H / n
            try:
                step = np.linalg.solve(jac, -G)
            except np.linalg.LinAlgError as exc:
                raise BalanceNotAttainedError("balancing Jacobian is singular") from exc
            if not np.all(np.isfinite(step)):
                raise BalanceNotAttainedError("balancing Jacobian is numerically singular")
            scale = 1.0
            for _ in range(60):
                cand = gamma + scale * step
                G_new = balance_equations(H @ cand, T, H)
                f_new = G_new @ G_new
                if np.isfinite(f_new) and f_new <= f * (1.0 - 1e-4 * scale):
                    break
                scale *= 0.5
            else:
                raise BalanceNotAttainedError(
                    f"line search stalled (max residual {np.max(np.abs(G)):.3g})"
                )
            gamma, G, f = cand, G_new, f_new
    return gamma


def _gmm_objective(beta, X, T):
    """Continuous-updating GMM criterion and its gradient in ``beta``."""
    n = X.shape[0]
    raw = expit(X @ beta)
    p = clip_propensity(raw)
    live = (p == raw).astype(float)  # clipped subjects have zero derivative
    v = p * (1.0 - p)
    r = T - p
    g = np.concatenate([X.T @ r, X.T @ (r / v)]) / n
    s11 = (X * v[:, None]).T @ X / n
    s12 = X.T @ X / n
    s22 = (X / v[:, None]).T @ X / n
    sigma = np.block([[s11, s12], [s12, s22]])
    a = np.linalg.pinv(sigma, hermitian=True) @ g
    d = X.shape[1]
    xa1 = X @ a[:d]
    xa2 = X @ a[d:]
    q = T * (1.0 - p) / p + (1.0 - T) * p / (1.0 - p)
    tilt = 1.0 - 2.0 * p
    per = -2.0 * (v * xa1 + q * xa2) - (v * tilt * xa1**2 - tilt / v * xa2**2)
    return float(g @ a), X.T @ (per * live) / n


def _solve_gmm(H, T, start) -> tuple[np.ndarray, bool]:
    # whiten the non-intercept columns; the criterion is invariant to this
    mu = H[:, 1:].mean(axis=0)
    U, sv, Vt = np.linalg.svd(H[:, 1:] - mu, full_matrices=False)
    keep = sv > 1e-10 * sv[0]
    if not np.all(keep):
        raise SingularDesignError("balancing design is rank deficient")
    A = Vt.T / sv * np.sqrt(H.shape[0])
    X = np.column_stack([np.ones(H.shape[0]), (H[:, 1:] - mu) @ A])

    def to_white(gamma):
        return np.concatenate([[gamma[0] + mu @ gamma[1:]], np.linalg.solve(A, gamma[1:])])

    def from_white(beta):
        b = A @ beta[1:]
        return np.concatenate([[beta[0] - mu @ b], b])

    starts = [to_white(start)]
    try:
        starts.append(to_white(_solve_balance(H, T, start, CBPS_MAX_ITER, CBPS_TOL)))
    except BalanceNotAttainedError:
        pass
    best = None
    with np.errstate(over="ignore", invalid="ignore"):
        for x0 in starts:
            res = minimize(_gmm_objective, x0, args=(X, T), jac=True, method="BFGS")
            if np.all(np.isfinite(res.x)) and (best is None or res.fun < best.fun):
                best = res
    if best is None:
        raise BalanceNotAttainedError("GMM criterion could not be minimized")
    return from_white(best.x), bool(best.success)


def _k1(t):
    return t - 0.5


def _k2(t):
    return (_k1(t) ** 2 - 1.0 / 12.0) / 2.0


def _k4(t):
    k = _k1(t)
    return (k**4 - k**2 / 2.0 + 7.0 / 240.0) / 24.0


def _check_unit_cube(a, name):
    if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must lie in [0, 1]")


def sobolev_kernel(u, v) -> float:
    """Product of univariate second-order Sobolev spline kernels on [0, 1]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape or u.ndim != 1:
        raise InvalidArgumentError("kernel arguments must be vectors of equal length")
    _check_unit_cube(u, "u")
    _check_unit_cube(v, "v")
    terms = 1.0 + _k1(u) * _k1(v) + _k2(u) * _k2(v) - _k4(np.abs(u - v))
    return float(np.prod(terms))


def sobolev_gram(U, V=None) -> np.ndarray:
    """Gram matrix of :func:`sobolev_kernel` between the rows of ``U`` and ``V``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = U if V is None else np.atleast_2d(np.asarray(V, dtype=float))
    _check_unit_cube(U, "U")
    _check_unit_cube(V, "V")
    K = np.ones((U.shape[0], V.shape[0]))
    for c in range(U.shape[1]):
        s = U[:, c][:, None]
        t = V[:, c][None, :]
        K *= 1.0 + _k1(s) * _k1(t) + _k2(s) * _k2(t) - _k4(np.abs(s - t))
    return K


@dataclass(frozen=True, eq=False)
class ArmSolution:
    weights: np.ndarray
    objective: float
    imbalance: float
    penalty: float
    iterations: int
    converged: bool
    trace: tuple = field(default=(), repr=False)


def solve_arm_weights(
    K: np.ndarray,
    in_arm,
    lam: float,
    *,
    max_iter: int = 5000,
    rtol: float = 1e-9,
    keep_trace: bool = False,
) -> ArmSolution:
    """Projected gradient for one arm's nonnegative balancing weights.

    Minimizes ``(a - b)' K (a - b) + lam/n * sum(w^2)`` over ``w >= 0`` on the
    arm, with ``a_i = w_i/n`` on the arm (zero elsewhere) and ``b_i = 1/n``.
    Starts from ``w = n / n_arm``; steps are chosen by backtracking so the
    objective never increases.
    """
    in_arm = np.asarray(in_arm, dtype=bool)
    n = K.shape[0]
    idx = np.flatnonzero(in_arm)
    if idx.size == 0:
        raise InvalidArgumentError("cannot balance an empty arm")
    Kaa = K[np.ix_(idx, idx)]
    kbar = K[idx].sum(axis=1)
    const = K.sum() / n**2
    inv_n2 = 1.0 / n**2
    pen = lam / n

    def parts(w, Kw):
        imb = (w @ Kw - 2.0 * (w @ kbar)) * inv_n2 + const
        return imb, pen * (w @ w)

    # 1/L with L from a few power iterations; backtracking absorbs any underestimate
    v = np.ones(idx.size)
    for _ in range(20):
        v = Kaa @ v
        v /= np.linalg.norm(v)
    lmax = float(v @ Kaa @ v)
    step = 1.0 / (2.0 * inv_n2 * lmax + 2.0 * pen)

    w = np.full(idx.size, n / idx.size)
    Kw = Kaa @ w
    imb, p = parts(w, Kw)
    obj = imb + p
    trace = [obj] if keep_trace else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * inv_n2 * (Kw - kbar) + 2.0 * pen * w
        while True:
            w_new = np.maximum(w - step * grad, 0.0)
            d = w_new - w
            Kw_new = Kaa @ w_new
            imb_new, p_new = parts(w_new, Kw_new)
            obj_new = imb_new + p_new
            if obj_new <= obj + grad @ d + (d @ d) / (2.0 * step) or step < 1e-300:
                break
            step *= 0.5
        if obj_new > obj:
            # round-off plateau: no representable descent left
            converged = True
            break
        change = obj - obj_new
        w, Kw, imb, p, obj = w_new, Kw_new, imb_new, p_new, obj_new
        if keep_trace:
            trace.append(obj)
        if change <= rtol * abs(obj):
            converged = True
            break

    full = np.zeros(n)
    full[idx] = w
    return ArmSolution(full, obj, imb, p, it, converged, tuple(trace) if keep_trace else ())


@dataclass(frozen=True, eq=False)
class KernelBalanceResult:
    treated_weights: np.ndarray
    control_weights: np.ndarray
    lambda_treated: float
    lambda_control: float
    imbalance_treated: float
    imbalance_control: float
    converged: bool

    def as_propensity_fit(self, n_components: int | None = None) -> PropensityFit:
        return PropensityFit(
            method="KBCB",
            treated_weights=self.treated_weights,
            control_weights=self.control_weights,
            converged=self.converged,
            n_components=n_components,
        )


def _best_over_grid(K, in_arm, lambda_grid) -> tuple[float, ArmSolution]:
    best = None
    for lam in lambda_grid:
        sol = solve_arm_weights(K, in_arm, lam)
        if best is None or sol.objective < best[1].objective:
            best = (lam, sol)
    return best


def fit_kernel_balance(
    sub: SubstituteCovariate,
    T,
    lambda_grid=DEFAULT_LAMBDA_GRID,
) -> KernelBalanceResult:
    """Kernel-based covariate balancing weights for both arms.

    The penalty is picked per arm from ``lambda_grid`` by the value of
    imbalance plus penalty at the solution.
    """
    n = sub.n_subjects
    T = check_treatment(T, n)
    check_both_arms(T)
    if n < 10:
        raise InvalidArgumentError("kernel balancing needs at least 10 subjects")
    lambda_grid = tuple(float(x) for x in lambda_grid)
    if not lambda_grid or min(lambda_grid) <= 0:
        raise InvalidArgumentError("lambda grid must contain positive values")
    K = sobolev_gram(sub.scaled())
    lam_t, sol_t = _best_over_grid(K, T == 1, lambda_grid)
    lam_c, sol_c = _best_over_grid(K, T == 0, lambda_grid)
    return KernelBalanceResult(
        treated_weights=sol_t.weights,
        control_weights=sol_c.weights,
        lambda_treated=lam_t,
        lambda_control=lam_c,
        imbalance_treated=sol_t.imbalance,
        imbalance_control=sol_c.imbalance,
        converged=sol_t.converged and sol_c.converged,
    )
