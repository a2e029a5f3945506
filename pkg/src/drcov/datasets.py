"""CSV ingestion for sample, returns and labeled data, and result serialization.

Rows and columns in error details are 1-based and count the header line, so
they match what a text editor shows.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InsufficientData, MalformedHeader, MalformedRow, NonFinite


def _read_rows(path) -> list[tuple[int, list[str]]]:
    with Path(path).open(newline="") as fh:
        return [(i, [c.strip() for c in row]) for i, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_grid(path, rows, first_col: int = 0, width: int | None = None) -> np.ndarray:
    """Float matrix from ``rows[*][first_col:]``; every row must have ``width`` cells."""
    out = []
    for line, row in rows:
        if width is not None and len(row) != width:
            raise MalformedRow(f"{path}: row {line} has {len(row)} fields, expected {width}", row=line, expected=width, found=len(row))
        vals = []
        for j, cell in enumerate(row[first_col:], start=first_col + 1):
            try:
                v = float(cell)
            except ValueError:
                raise MalformedRow(f"{path}: row {line}, column {j}: {cell!r} is not a number", row=line, column=j) from None
            if not math.isfinite(v):
                raise NonFinite(f"{path}: row {line}, column {j} is not finite", row=line, column=j)
            vals.append(v)
        out.append(vals)
    return np.array(out, dtype=float)


def _require_header(path, rows, numeric_from: int) -> list[str]:
    if not rows:
        raise MalformedHeader(f"{path}: file is empty")
    line, header = rows[0]
    if any(_is_number(c) for c in header[numeric_from:]) or any(not c for c in header):
        raise MalformedHeader(f"{path}: first row must be a header of column names", row=line)
    if len(set(header)) != len(header):
        raise MalformedHeader(f"{path}: duplicate column names in header", row=line)
    return header


def read_samples_csv(path) -> tuple[list[str] | None, np.ndarray]:
    """``n x p`` observations; a first row that is not all numbers is taken as a header."""
    rows = _read_rows(path)
    names = None
    if rows and not all(_is_number(c) for c in rows[0][1]):
        names = _require_header(path, rows, 0)
        rows = rows[1:]
    if not rows:
        raise InsufficientData(f"{path}: no observations")
    width = len(names) if names is not None else len(rows[0][1])
    return names, _parse_grid(path, rows, 0, width)


@dataclass(frozen=True)
class ReturnsData:
    dates: tuple[str, ...]
    assets: tuple[str, ...]
    returns: np.ndarray


def read_returns_csv(path) -> ReturnsData:
    """Date column, then one decimal return per asset; the header row is mandatory.

    Dates are opaque labels; time order is row order.
    """
    rows = _read_rows(path)
    header = _require_header(path, rows, 1)
    if len(header) < 2:
        raise MalformedHeader(f"{path}: need a date column and at least one asset", row=rows[0][0])
    body = rows[1:]
    if not body:
        raise InsufficientData(f"{path}: no return rows")
    values = _parse_grid(path, body, 1, len(header))
    return ReturnsData(tuple(r[0] for _, r in body), tuple(header[1:]), values)


@dataclass(frozen=True)
class LabeledData:
    features: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray


def read_labeled_csv(path) -> LabeledData:
    """Feature columns followed by an integer label column; the header row is mandatory."""
    rows = _read_rows(path)
    header = _require_header(path, rows, 0)
    if len(header) < 2:
        raise MalformedHeader(f"{path}: need at least one feature and a label column", row=rows[0][0])
    body = rows[1:]
    if not body:
        raise InsufficientData(f"{path}: no labeled rows")
    labels = []
    for line, row in body:
        if len(row) != len(header):
            raise MalformedRow(f"{path}: row {line} has {len(row)} fields, expected {len(header)}", row=line, expected=len(header), found=len(row))
        cell = row[-1]
        try:
            labels.append(int(cell))
        except ValueError:
            raise MalformedRow(f"{path}: row {line}, column {len(row)}: label {cell!r} is not an integer", row=line, column=len(row)) from None
    x = _parse_grid(path, [(line, row[:-1]) for line, row in body])
    return LabeledData(tuple(header[:-1]), x, np.array(labels, dtype=int))


# --------------------------------------------------------------- writing


def format_cell(v) -> str:
    """Shortest round-trip text for floats; ``inf``, ``-inf`` and ``nan`` spelled out."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table_csv(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise DimensionMismatch(f"row has {len(row)} cells for {len(columns)} columns")
            writer.writerow([format_cell(v) for v in row])


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, enum.Enum):
        return to_jsonable(obj.value)
    return str(obj)


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj))
