"""CSV ingestion and writing, truth-record sidecars.

CSV files are UTF-8, comma separated, with a header row, locale-independent
decimal points, and no thousands separators.  Role columns must parse as
numbers; rows with missing values in role columns are dropped with a counted
warning.  Values are written with shortest round-trip formatting, so a
simulate -> write -> load cycle reproduces the numeric matrix bit for bit.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .dataset import QuantileDataset
from .dgp import TruthRecord
from .exceptions import CellParseError, DataError, EmptyDataError

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


def _parse_cell(token: str):
    """(value, missing_flag); raises ValueError on garbage."""
    t = token.strip()
    if t.lower() in MISSING_TOKENS:
        return np.nan, True
    return float(t), False


def load_csv(path, roles: dict) -> QuantileDataset:
    """Load a dataset, resolving role columns by name.

    ``roles`` maps ``"y"`` to a column name and optionally ``"d"``, ``"x"``,
    ``"z"`` to lists of column names.  Unparseable cells in role columns
    raise with 1-based data-row and column coordinates; missing values drop
    the row.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file does not exist: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = list(reader)

    def _resolve(name):
        try:
            return header.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r} in {path}") from None

    y_name = roles.get("y")
    if not y_name:
        raise DataError("roles must name a y column")
    role_names = [y_name]
    for key in ("d", "x", "z"):
        vals = roles.get(key) or []
        if isinstance(vals, str):
            vals = [vals]
        role_names.extend(vals)
    if len(set(role_names)) != len(role_names):
        raise DataError(f"role columns overlap: {role_names}")
    role_pos = {name: _resolve(name) for name in role_names}

    matrix = []
    dropped = 0
    for i, row in enumerate(rows, start=1):
        parsed = np.full(len(header), np.nan)
        missing = False
        for j, name in enumerate(header):
            token = row[j] if j < len(row) else ""
            if name in role_pos:
                try:
                    value, is_missing = _parse_cell(token)
                except ValueError:
                    raise CellParseError(row=i, column=name, value=token.strip()) from None
                if is_missing:
                    missing = True
                parsed[j] = value
            else:
                try:
                    parsed[j], _ = _parse_cell(token)
                except ValueError:
                    pass  # non-role columns may hold anything
        if missing:
            dropped += 1
            continue
        matrix.append(parsed)

    if not matrix:
        raise EmptyDataError(f"no usable rows in {path} ({dropped} dropped)")
    if dropped:
        warnings.warn(
            f"dropped {dropped} row(s) with missing role values from {path}",
            stacklevel=2,
        )

    def _cols(key):
        vals = roles.get(key) or []
        if isinstance(vals, str):
            vals = [vals]
        return tuple(header.index(v) for v in vals)

    return QuantileDataset(
        matrix=np.asarray(matrix),
        column_names=tuple(header),
        y_col=header.index(y_name),
        d_cols=_cols("d"),
        x_cols=_cols("x"),
        z_cols=_cols("z"),
        meta={"source": str(path), "n_dropped": dropped},
    )


def write_csv(dataset: QuantileDataset, path) -> None:
    """Write all dataset columns with shortest round-trip float formatting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.column_names)
        for row in dataset.matrix:
            writer.writerow([repr(float(v)) for v in row])


def write_truth(truth: TruthRecord, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2)
        fh.write("\n")


def load_truth(path) -> TruthRecord:
    with open(path, encoding="utf-8") as fh:
        return TruthRecord.from_dict(json.load(fh))
