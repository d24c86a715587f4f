"""Logistic regression by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from ._validation import check_treatment
from .exceptions import InvalidArgumentError, SeparationError, SingularDesignError

DRIFT_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class LogisticFit:
    coefficients: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    fitted: np.ndarray
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def n_parameters(self) -> int:
        return self.coefficients.shape[0]

    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2.0 * self.n_parameters


def log_likelihood(eta, T) -> float:
    """Bernoulli log-likelihood of labels ``T`` given linear predictors ``eta``."""
    eta = np.asarray(eta, dtype=float)
    return float(np.sum(T * log_expit(eta) + (1.0 - T) * log_expit(-eta)))


def _newton_drift(X, T, beta, eta, penalty) -> float:
    """Size of one more Newton step in predictor space; large at a separated 'optimum'."""
    p = expit(eta)
    grad = X.T @ (T - p) - penalty * beta
    info = (X * (p * (1.0 - p))[:, None]).T @ X + np.diag(penalty)
    try:
        step = np.linalg.lstsq(info, grad, rcond=None)[0]
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.max(np.abs(X @ step)))


def fit_logistic_mle(
    design,
    T,
    *,
    ridge: float = 0.0,
    max_iter: int = 100,
    drift_tol: float = DRIFT_TOL,
) -> LogisticFit:
    """Maximum likelihood logistic regression from a zero start.

    Parameters
    ----------
    design : array of shape (n, d)
        Design matrix; by convention the first column is the intercept.
    T : array of shape (n,)
        Binary response.
    ridge : float
        Optional quadratic penalty ``ridge / 2 * ||beta[1:]||^2`` on the
        non-intercept coefficients. With ``ridge == 0`` the design must have
        full column rank.
    max_iter : int
        Iteration cap.
    drift_tol : float
        Separation test at the converged point: if one more Newton step would
        still move some linear predictor by more than ``drift_tol``, the
        likelihood is flat along a separating direction and has no finite
        maximizer. Large coefficients alone are not treated as separation,
        since nearly collinear designs produce them legitimately.

    Raises
    ------
    SingularDesignError
        If the (penalized) information matrix is singular.
    SeparationError
        If the likelihood appears to have no finite maximizer.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise InvalidArgumentError(f"design must be a matrix, got shape {X.shape}")
    n, d = X.shape
    T = check_treatment(T, n)
    if d > n:
        raise SingularDesignError(f"design has more columns ({d}) than rows ({n})")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("design contains non-finite values")
    if ridge == 0.0 and np.linalg.matrix_rank(X) < d:
        raise SingularDesignError("design matrix is rank deficient")

    penalty = np.full(d, float(ridge))
    penalty[0] = 0.0

    def objective(beta):
        eta = X @ beta
        return log_likelihood(eta, T) - 0.5 * np.sum(penalty * beta**2), eta

    beta = np.zeros(d)
    obj, eta = objective(beta)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = X.T @ (T - p) - penalty * beta
        if np.max(np.abs(grad)) < 1e-8:
            converged = True
            it -= 1
            break
        v = p * (1.0 - p)
        info = (X * v[:, None]).T @ X + np.diag(penalty)
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("information matrix is singular") from exc
        if not np.all(np.isfinite(step)):
            raise SingularDesignError("information matrix is numerically singular")

        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            cand_obj, cand_eta = objective(cand)
            if cand_obj >= obj:
                break
            scale *= 0.5
        else:
            # no ascent along the Newton direction: at the optimum up to round-off
            converged = True
            break

        delta = cand_obj - obj
        beta, obj, eta = cand, cand_obj, cand_eta
        trace.append(obj)
        if abs(delta) < 1e-10:
            converged = True
            break

    if not converged:
        raise SeparationError(f"IRLS did not converge in {max_iter} iterations")
    fitted = expit(eta)
    loglik = log_likelihood(eta, T)
    if loglik > -1e-6:
        raise SeparationError("complete separation: fitted probabilities reproduce the labels exactly")
    if _newton_drift(X, T, beta, eta, penalty) > drift_tol:
        raise SeparationError("quasi-separation: likelihood keeps increasing along a separating direction")
    return LogisticFit(
        coefficients=beta,
        log_likelihood=loglik,
        iterations=it,
        converged=converged,
        fitted=fitted,
        loglik_trace=tuple(trace),
    )
