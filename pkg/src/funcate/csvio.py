"""Plain-text CSV exchange for functional samples and scalar covariate tables.

The functional file has a header of grid points followed by one trajectory
per row. The covariate file has a header of column names and one subject
per row. Rows of the two files are matched by position, there are no join
keys. Floats are written with 17 significant digits so a write/read cycle
is lossless.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .exceptions import InvalidArgumentError
from .funcdata import Grid, GridFunctionSample

FLOAT_FORMAT = ".17g"


class CsvFormatError(InvalidArgumentError):
    """Malformed CSV input; the message names the offending row and column."""


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


def _parse_float(text: str, path, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CsvFormatError(f"{path}: row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not np.isfinite(value):
        raise CsvFormatError(f"{path}: row {row}, column {col}: non-finite value {text!r}")
    return value


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    return rows


def _body(rows, path) -> np.ndarray:
    header, body = rows[0], rows[1:]
    if not body:
        raise CsvFormatError(f"{path}: no data rows after the header")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2  # 1-based, header is line 1
        if len(row) != len(header):
            raise CsvFormatError(f"{path}: row {line}: expected {len(header)} columns, found {len(row)}")
        for j, cell in enumerate(row):
            out[i, j] = _parse_float(cell.strip(), path, line, j + 1)
    return out


def sample_to_string(sample: GridFunctionSample) -> str:
    """CSV text of ``sample``: grid points as the header, one trajectory per row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([_fmt(t) for t in sample.grid.points])
    for row in sample.values:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_functional_csv(sample: GridFunctionSample, path) -> None:
    """Write ``sample`` with its grid points as the header row."""
    with open(path, "w", newline="") as fh:
        fh.write(sample_to_string(sample))


def read_functional_csv(path) -> GridFunctionSample:
    """Parse a functional-covariate CSV into a :class:`GridFunctionSample`."""
    rows = _read_rows(path)
    points = np.array([_parse_float(c.strip(), path, 1, j + 1) for j, c in enumerate(rows[0])])
    try:
        grid = Grid.from_points(points)
    except InvalidArgumentError as exc:
        raise CsvFormatError(f"{path}: row 1 (grid header): {exc}") from None
    return GridFunctionSample(grid, _body(rows, path))


def write_covariate_csv(columns: dict, path) -> None:
    """Write named equal-length columns, one subject per row."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    if len({len(c) for c in data}) > 1:
        raise InvalidArgumentError("covariate columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(data[0]) if data else 0):
            w.writerow([_fmt(c[i]) for c in data])


def read_covariate_csv(path) -> dict[str, np.ndarray]:
    """Parse a named-column CSV into ``{name: float array}`` in header order."""
    rows = _read_rows(path)
    names = [c.strip() for c in rows[0]]
    for j, name in enumerate(names):
        if not name:
            raise CsvFormatError(f"{path}: row 1, column {j + 1}: empty column name")
    if len(set(names)) != len(names):
        raise CsvFormatError(f"{path}: row 1: duplicate column names")
    body = _body(rows, path)
    return {name: body[:, j].copy() for j, name in enumerate(names)}


def export_dataset(data, covariate_path, functional_path, treatment="T", outcome="Y") -> None:
    """Write an :class:`~funcate.ate.ObservationalData` as a covariate/functional CSV pair."""
    cols = {outcome: data.Y, treatment: data.T}
    for k in range(data.W.shape[1]):
        cols[f"W{k + 1}"] = data.W[:, k]
    write_covariate_csv(cols, covariate_path)
    write_functional_csv(data.sample, functional_path)


__all__ = [
    "CsvFormatError",
    "read_functional_csv",
    "write_functional_csv",
    "read_covariate_csv",
    "write_covariate_csv",
    "export_dataset",
    "sample_to_string",
]
