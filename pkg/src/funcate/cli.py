"""``funcate`` command line: Monte Carlo reproduction and CSV analysis.

Exit codes are 0 on success, 1 on a numerical or statistical failure and 2 on
a usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass

import numpy as np

from .ate import ObservationalData, bootstrap, estimate_ate
from .csvio import read_covariate_csv, read_functional_csv
from .exceptions import FuncateError, InvalidArgumentError
from .fpca import Selection
from .ps_direct import METHODS
from .simgen import SimDesign, run_cell

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

ANALYZE_COLUMNS = (
    "method",
    "n_components",
    "ht",
    "hajek",
    "se_ht",
    "se_hajek",
    "ci95_ht_lower",
    "ci95_ht_upper",
    "ci95_hajek_lower",
    "ci95_hajek_upper",
    "n_failed",
)

ANALYZE_EPILOG = """\
The covariate CSV has a header row of column names and one subject per row.
It must contain the treatment (0/1) and outcome columns; every other column
is used as a scalar covariate and is mean-centered before fitting. The
functional CSV has a header row of grid points on [0, 1] and one trajectory
per row. Rows are matched by position: row i of both files is subject i.
"""


class UsageError(Exception):
    pass


def _method_list(text: str) -> tuple:
    methods = tuple(m.strip().upper() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"methods must be a comma list from {','.join(METHODS)}")
    return methods


def _selection(text: str) -> Selection:
    try:
        return Selection.parse(text)
    except (InvalidArgumentError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _pos_int(text: str) -> int:
    v = _nonneg_int(text)
    if v == 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one Monte Carlo design cell")
    sim.add_argument("--psm", type=int, choices=(1, 2, 3), required=True, help="propensity model")
    sim.add_argument("--om", type=int, choices=(1, 2), required=True, help="outcome model")
    sim.add_argument("--n", type=_pos_int, required=True, help="subjects per dataset")
    sim.add_argument("--runs", type=_pos_int, required=True, help="Monte Carlo replications")
    sim.add_argument("--seed", type=_nonneg_int, default=0)
    sim.add_argument("--methods", type=_method_list, default=METHODS, help="comma list, default all")
    sim.add_argument("--out", required=True, help="output directory for summary.csv and summary.md")
    sim.add_argument("--grid-points", type=_pos_int, default=101)
    sim.add_argument("--cbps", choices=("over", "exact"), default="over", help="CBPS identification")

    ana = sub.add_parser(
        "analyze",
        help="estimate the ATE from CSV files",
        epilog=ANALYZE_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ana.add_argument("--covariates", required=True, help="covariate CSV path")
    ana.add_argument("--functional", required=True, help="functional covariate CSV path")
    ana.add_argument("--treatment", required=True, help="treatment column name")
    ana.add_argument("--outcome", required=True, help="outcome column name")
    ana.add_argument("--methods", type=_method_list, default=METHODS, help="comma list, default all")
    ana.add_argument(
        "--selection", type=_selection, default=Selection.fve(0.95), help="fve:X | aic | fixed:L (default fve:0.95)"
    )
    ana.add_argument("--bootstrap", type=_nonneg_int, default=1000, help="resamples B, 0 disables")
    ana.add_argument("--seed", type=_nonneg_int, default=0)
    ana.add_argument("--out", help="write the result table as CSV to this path")
    ana.add_argument("--cbps", choices=("over", "exact"), default="over", help="CBPS identification")
    return parser


@dataclass(frozen=True)
class AnalysisRequest:
    covariates: str
    functional: str
    treatment: str
    outcome: str
    methods: tuple = METHODS
    selection: Selection = Selection.fve(0.95)
    bootstrap: int = 1000
    seed: int = 0
    cbps: str = "over"

    def __post_init__(self):
        if self.bootstrap != 0 and self.bootstrap < 100:
            raise InvalidArgumentError(f"bootstrap B must be 0 or at least 100, got {self.bootstrap}")


def load_data(request: AnalysisRequest) -> ObservationalData:
    """Read both CSV files and assemble mean-centered observational data."""
    cols = read_covariate_csv(request.covariates)
    sample = read_functional_csv(request.functional)
    for name in (request.treatment, request.outcome):
        if name not in cols:
            raise InvalidArgumentError(f"{request.covariates}: no column named {name!r}")
    if request.treatment == request.outcome:
        raise InvalidArgumentError("treatment and outcome must be different columns")
    n = len(cols[request.treatment])
    if n != sample.n_subjects:
        raise InvalidArgumentError(
            f"covariate CSV has {n} subjects but functional CSV has {sample.n_subjects}"
        )
    scalar = [k for k in cols if k not in (request.treatment, request.outcome)]
    W = np.column_stack([cols[k] for k in scalar]) if scalar else None
    return ObservationalData(cols[request.outcome], cols[request.treatment], W, sample).centered()


def analyze(request: AnalysisRequest, n_jobs: int | None = None) -> list[dict]:
    """Run every requested method; one result row per method."""
    data = load_data(request)
    rows = []
    for method in request.methods:
        if request.bootstrap:
            est = bootstrap(
                data, method, request.bootstrap, request.seed, request.selection, n_jobs, request.cbps
            )
        else:
            est = estimate_ate(data, method, request.selection, cbps_identification=request.cbps)
        nan2 = (np.nan, np.nan)
        se = est.se or nan2
        ci = est.ci95 or (nan2, nan2)
        rows.append(
            {
                "method": method,
                "n_components": est.propensity.n_components,
                "ht": est.ht,
                "hajek": est.hajek,
                "se_ht": se[0],
                "se_hajek": se[1],
                "ci95_ht_lower": ci[0][0],
                "ci95_ht_upper": ci[0][1],
                "ci95_hajek_lower": ci[1][0],
                "ci95_hajek_upper": ci[1][1],
                "n_failed": est.n_failed,
            }
        )
    return rows


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else format(v, ".17g")
    return "" if v is None else str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANALYZE_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in ANALYZE_COLUMNS])
    return buf.getvalue()


def rows_to_text(rows: list[dict]) -> str:
    def f(x):
        return "-" if not np.isfinite(x) else f"{x:.4f}"

    lines = [
        f"{'method':<7} {'L':>3} {'HT':>11} {'SE':>9} {'95% CI':>23} {'Hajek':>11} {'SE':>9} {'95% CI':>23}"
    ]
    for r in rows:
        L = "-" if r["n_components"] is None else str(r["n_components"])
        ci_ht = f"[{f(r['ci95_ht_lower'])}, {f(r['ci95_ht_upper'])}]"
        ci_hj = f"[{f(r['ci95_hajek_lower'])}, {f(r['ci95_hajek_upper'])}]"
        lines.append(
            f"{r['method']:<7} {L:>3} {f(r['ht']):>11} {f(r['se_ht']):>9} {ci_ht:>23} "
            f"{f(r['hajek']):>11} {f(r['se_hajek']):>9} {ci_hj:>23}"
        )
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    try:
        design = SimDesign(
            args.psm,
            args.om,
            args.n,
            args.runs,
            seed=args.seed,
            methods=args.methods,
            grid_points=args.grid_points,
            cbps_identification=args.cbps,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    summary = run_cell(design)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        fh.write(summary.to_csv())
    with open(os.path.join(args.out, "summary.md"), "w") as fh:
        fh.write(summary.to_markdown())
    sys.stdout.write(summary.to_markdown())
    if summary.has_missing:
        empty = [f"{r.method}/{r.estimator}" for r in summary.rows if not np.isfinite(r.rmse)]
        print(f"funcate: no valid runs for {', '.join(empty)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        request = AnalysisRequest(
            args.covariates,
            args.functional,
            args.treatment,
            args.outcome,
            args.methods,
            args.selection,
            args.bootstrap,
            args.seed,
            args.cbps,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    rows = analyze(request)
    sys.stdout.write(rows_to_text(rows))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(rows_to_csv(rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = cmd_simulate if args.command == "simulate" else cmd_analyze
    try:
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"funcate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"funcate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FuncateError, np.linalg.LinAlgError, FloatingPointError) as exc:
        # validation errors subclass ValueError; the rest are fit failures
        code = EXIT_USAGE if isinstance(exc, ValueError) else EXIT_FAILURE
        print(f"funcate: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
