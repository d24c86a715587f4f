"""Simulation designs with a Fourier functional covariate and the Monte Carlo harness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .ate import DEFAULT_CBPS_IDENTIFICATION, ObservationalData, estimates_from_fit, fit_propensity, resolve_n_jobs
from .basis import fourier_matrix
from .exceptions import FuncateError, InvalidArgumentError, NoValidRunsError
from .fpca import fit_fpca
from .funcdata import DEFAULT_GRID_POINTS, Grid, GridFunctionSample, trapezoid_grid
from .ps_direct import METHODS

N_LATENT = 6
ALPHA = np.array([-1.0, 0.5, -0.1])
BETA0_COEF = np.array([2.0, 0.5, 0.5, 1.0])
TRUE_TAU = {1: 10.0, 2: 0.0}
ESTIMATORS = ("HT", "Hajek")


def generate_subjects(n: int, rng: np.random.Generator, grid: Grid | None = None):
    """Draw latent normals ``Z`` (n x 6), scalar covariates ``W`` (n x 3) and trajectories."""
    grid = trapezoid_grid() if grid is None else grid
    Z = rng.standard_normal((n, N_LATENT))
    W = latent_to_scalar(Z)
    return Z, W, GridFunctionSample(grid, latent_to_curves(Z, grid))


def latent_to_scalar(Z) -> np.ndarray:
    Z = np.atleast_2d(Z)
    return np.column_stack(
        [Z[:, 0] + 2.0 * Z[:, 1], Z[:, 1] ** 2 - Z[:, 2] ** 2, np.exp(Z[:, 2]) - np.exp(0.5)]
    )


def latent_scores(Z) -> np.ndarray:
    """Population FPC scores ``A_k = 2 Z_k / k``."""
    Z = np.atleast_2d(Z)
    return 2.0 * Z / np.arange(1, N_LATENT + 1)


def latent_to_curves(Z, grid: Grid) -> np.ndarray:
    return latent_scores(Z) @ fourier_matrix(N_LATENT, grid.points)


def beta0(t) -> np.ndarray:
    return BETA0_COEF @ fourier_matrix(4, t)


def eta0(t, x) -> np.ndarray:
    return -0.5 + np.exp(-(((t - 0.5) / 0.3) ** 2) - (x / 5.0) ** 2)


def true_linear_predictor(psm: int, Z, W, X, grid: Grid) -> np.ndarray:
    Z, W, X = np.atleast_2d(Z), np.atleast_2d(W), np.atleast_2d(X)
    if psm == 1:
        return W @ ALPHA + grid.integrate(X * beta0(grid.points))
    if psm == 2:
        return W @ ALPHA + grid.integrate(eta0(grid.points, X))
    if psm == 3:
        return -Z[:, 0] + 0.5 * Z[:, 1] - 0.25 * Z[:, 2] - 0.1 * Z[:, 3]
    raise InvalidArgumentError(f"psm must be 1, 2 or 3, got {psm}")


def true_propensity(psm: int, Z, W, X, grid: Grid | None = None):
    """True treatment probability under design ``psm``.

    Accepts a single subject (1-d rows) or stacked rows; returns a float or a
    vector accordingly.
    """
    single = np.ndim(Z) == 1
    grid = trapezoid_grid(np.shape(X)[-1]) if grid is None else grid
    p = expit(true_linear_predictor(psm, Z, W, X, grid))
    return float(p[0]) if single else p


def generate_outcome(om: int, T, Z, rng: np.random.Generator | None = None, noise=None):
    """Outcome under design ``om``; the noise is drawn from ``rng`` unless given."""
    single = np.ndim(Z) == 1
    Z = np.atleast_2d(Z)
    T = np.atleast_1d(np.asarray(T, dtype=float))
    if noise is None:
        noise = rng.standard_normal(Z.shape[0])
    noise = np.atleast_1d(np.asarray(noise, dtype=float))
    if om == 1:
        lin = 27.4 * Z[:, 0] + 13.7 * Z[:, 1] + 13.7 * Z[:, 2] + 13.7 * Z[:, 3]
        Y = 200.0 + 10.0 * T + (1.5 * T - 0.5) * lin + noise
    elif om == 2:
        Y = Z[:, 0] * Z[:, 1] ** 3 * Z[:, 2] ** 2 * Z[:, 3] + noise
    else:
        raise InvalidArgumentError(f"om must be 1 or 2, got {om}")
    return float(Y[0]) if single else Y


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    data: ObservationalData
    Z: np.ndarray
    propensity: np.ndarray


def simulate_dataset(psm: int, om: int, n: int, rng: np.random.Generator, grid: Grid | None = None):
    """Subjects, treatment from the true propensity, then outcome; draws in that order."""
    Z, W, sample = generate_subjects(n, rng, grid)
    p = true_propensity(psm, Z, W, sample.values, sample.grid)
    T = (rng.random(n) < p).astype(float)
    Y = generate_outcome(om, T, Z, rng)
    return SimulatedDataset(ObservationalData(Y, T, W, sample), Z, p)


def run_rng(seed: int, run: int) -> np.random.Generator:
    """Independent stream for replication ``run`` of a cell seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(run)])


def trim_outliers(estimates, k: float = 10.0) -> tuple[np.ndarray, float]:
    """Drop values more than ``k`` sample SDs from the mean (one pass).

    Non-finite entries are ignored when computing the mean and SD and are
    never kept. The proportion is relative to the finite inputs.
    """
    x = np.asarray(estimates, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise NoValidRunsError("no finite estimates to trim")
    if x.size < 2:
        return x, 1.0
    mu = x.mean()
    sd = x.std(ddof=1)
    kept = x[np.abs(x - mu) <= k * sd]
    return kept, kept.size / x.size


def summarize(kept, true_tau: float) -> tuple[float, float]:
    """``(bias, rmse)`` of estimates around ``true_tau``."""
    x = np.asarray(kept, dtype=float)
    if x.size == 0:
        raise NoValidRunsError("no estimates to summarize")
    err = x - true_tau
    return float(err.mean()), float(np.sqrt(np.mean(err**2)))


@dataclass(frozen=True)
class SimDesign:
    psm: int
    om: int
    n: int
    runs: int
    seed: int = 0
    methods: tuple = METHODS
    grid_points: int = DEFAULT_GRID_POINTS
    cbps_identification: str = DEFAULT_CBPS_IDENTIFICATION

    def __post_init__(self):
        if self.psm not in (1, 2, 3):
            raise InvalidArgumentError(f"psm must be 1, 2 or 3, got {self.psm}")
        if self.om not in (1, 2):
            raise InvalidArgumentError(f"om must be 1 or 2, got {self.om}")
        if self.n < 50:
            raise InvalidArgumentError(f"n must be at least 50, got {self.n}")
        if self.cbps_identification not in ("over", "exact"):
            raise InvalidArgumentError(f"unknown CBPS identification {self.cbps_identification!r}")
        if self.runs < 1:
            raise InvalidArgumentError("runs must be positive")
        methods = tuple(m.upper() for m in self.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad or not methods:
            raise InvalidArgumentError(f"unknown methods {bad}; expected a subset of {METHODS}")
        object.__setattr__(self, "methods", methods)

    @property
    def true_tau(self) -> float:
        return TRUE_TAU[self.om]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    estimator: str
    bias: float
    rmse: float
    retained: float
    n_failed: int
    n_trimmed: int


@dataclass(frozen=True, eq=False)
class SimSummary:
    design: SimDesign
    true_tau: float
    rows: tuple
    estimates: dict = field(repr=False, default_factory=dict)

    def row(self, method: str, estimator: str) -> SummaryRow:
        for r in self.rows:
            if r.method == method and r.estimator == estimator:
                return r
        raise KeyError((method, estimator))

    CSV_COLUMNS = ("psm", "om", "n", "method", "estimator", "bias", "rmse", "retained")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        d = self.design
        for r in self.rows:
            writer.writerow(
                [d.psm, d.om, d.n, r.method, r.estimator, _fmt(r.bias), _fmt(r.rmse), _fmt(r.retained)]
            )
        return buf.getvalue()

    def to_markdown(self) -> str:
        d = self.design
        scale = 10.0 if d.om == 2 else 1.0
        unit = " (values x 10)" if d.om == 2 else ""
        lines = [
            f"PSM {d.psm}, OM {d.om}, n = {d.n}, {d.runs} runs, true tau = {self.true_tau:g}{unit}",
            "",
            "| method | HT bias | HT RMSE | Hajek bias | Hajek RMSE | retained (HT, Hajek) |",
            "|---|---:|---:|---:|---:|---|",
        ]
        for m in d.methods:
            ht, hj = self.row(m, "HT"), self.row(m, "Hajek")
            cells = [_md(ht.bias * scale), _md(ht.rmse * scale), _md(hj.bias * scale), _md(hj.rmse * scale)]
            lines.append(f"| {m} | " + " | ".join(cells) + f" | {_pct(ht.retained)}, {_pct(hj.retained)} |")
        return "\n".join(lines) + "\n"

    @property
    def has_missing(self) -> bool:
        return any(not np.isfinite(r.rmse) for r in self.rows)


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else format(x, ".17g")


def _md(x: float) -> str:
    return "-" if not np.isfinite(x) else f"{x:.2f}"


def _pct(x: float) -> str:
    return "-" if x >= 1.0 else f"{100 * x:.1f}%"


def run_replication(design: SimDesign, run: int) -> dict:
    """Fit every requested method on one simulated dataset.

    Returns ``{method: (ht, hajek)}`` with NaN for methods whose fit failed.
    """
    grid = trapezoid_grid(design.grid_points)
    sim = simulate_dataset(design.psm, design.om, design.n, run_rng(design.seed, run), grid)
    data = sim.data
    try:
        fpca = fit_fpca(data.sample)
    except FuncateError:
        fpca = None
    out = {}
    for method in design.methods:
        try:
            fit = fit_propensity(method, data, 0.95, fpca, design.cbps_identification)
            out[method] = estimates_from_fit(fit, data.Y, data.T)
        except (FuncateError, np.linalg.LinAlgError, FloatingPointError):
            out[method] = (np.nan, np.nan)
    return out


def run_cell(design: SimDesign, n_jobs: int | None = None) -> SimSummary:
    """Monte Carlo over ``design.runs`` replications with 10-SD trimming.

    Each replication draws from its own stream seeded by ``(seed, run)``, so
    the summary is identical for any worker count.
    """
    jobs = resolve_n_jobs(n_jobs)
    results = Parallel(n_jobs=jobs)(delayed(run_replication)(design, r) for r in range(design.runs))
    rows = []
    estimates = {}
    for method in design.methods:
        for k, est_name in enumerate(ESTIMATORS):
            values = np.array([res[method][k] for res in results], dtype=float)
            estimates[(method, est_name)] = values
            finite = values[np.isfinite(values)]
            n_failed = design.runs - finite.size
            try:
                kept, _ = trim_outliers(finite)
                bias, rmse = summarize(kept, design.true_tau)
            except NoValidRunsError:
                rows.append(SummaryRow(method, est_name, np.nan, np.nan, 0.0, n_failed, 0))
                continue
            rows.append(
                SummaryRow(
                    method,
                    est_name,
                    bias,
                    rmse,
                    kept.size / design.runs,
                    n_failed,
                    finite.size - kept.size,
                )
            )
    return SimSummary(design, design.true_tau, tuple(rows), estimates)
