"""Dataset loading, growth-rate transformation, and column permutation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    MissingValue,
    NonPositiveForLog,
    NotAPermutation,
    RaggedCsv,
    UnknownTransform,
)

TRANSFORMS = ("none", "log_diff_400")


@dataclass
class Dataset:
    values: np.ndarray
    names: list
    transforms: list
    dates: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatch("values must be a T x n matrix")
        t, n = self.values.shape
        if len(self.names) != n or len(self.transforms) != n:
            raise DimensionMismatch("names/transforms must align with columns")
        for tag in self.transforms:
            if tag not in TRANSFORMS:
                raise UnknownTransform(f"unknown transformation tag {tag!r}")
        if self.dates is not None and len(self.dates) != t:
            raise DimensionMismatch("dates must align with rows")
        if not np.all(np.isfinite(self.values)):
            raise MissingValue("dataset contains missing or non-finite values")

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def t(self):
        return self.values.shape[0]


def load_transform_spec(path):
    """Sidecar CSV, one 'mnemonic,tag' row per variable, no header."""
    spec = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if len(row) != 2:
                raise RaggedCsv(f"transform spec row {row!r} is not two columns")
            name, tag = row[0].strip(), row[1].strip()
            if tag not in TRANSFORMS:
                raise UnknownTransform(f"unknown transformation tag {tag!r}")
            spec[name] = tag
    return spec


def _parse_cell(cell, where):
    text = cell.strip()
    if text == "" or text.lower() in ("na", "nan"):
        raise MissingValue(f"missing value at {where}")
    try:
        value = float(text)
    except ValueError:
        raise MissingValue(f"non-numeric value {cell!r} at {where}") from None
    if not math.isfinite(value):
        raise MissingValue(f"non-finite value {cell!r} at {where}")
    return value


def load_csv(path, transform_spec=None) -> Dataset:
    """Load a rectangular CSV (header of mnemonics, optional leading date
    column), then apply per-column transformations: log_diff_400 maps x_t to
    400(log x_t - log x_{t-1}).  If any column differences, the first row is
    dropped globally so all columns stay aligned."""
    transform_spec = dict(transform_spec or {})
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise RaggedCsv("need a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    width = len(header)
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise RaggedCsv(f"row {k} has {len(row)} cells, header has {width}")

    # leading column is dates when its first data cell is not numeric
    has_dates = False
    try:
        float(rows[1][0])
    except ValueError:
        has_dates = True
    names = header[1:] if has_dates else header
    dates = [row[0].strip() for row in rows[1:]] if has_dates else None
    start = 1 if has_dates else 0
    raw = np.array([
        [_parse_cell(cell, f"row {k}, column {names[j]}")
         for j, cell in enumerate(row[start:])]
        for k, row in enumerate(rows[1:], start=2)
    ])

    for name in transform_spec:
        if name not in names:
            raise UnknownTransform(f"transformation given for unknown column {name!r}")
    transforms = [transform_spec.get(name, "none") for name in names]
    for tag in transforms:
        if tag not in TRANSFORMS:
            raise UnknownTransform(f"unknown transformation tag {tag!r}")

    any_diff = any(tag == "log_diff_400" for tag in transforms)
    columns = []
    for j, tag in enumerate(transforms):
        col = raw[:, j]
        if tag == "log_diff_400":
            if np.any(col <= 0):
                raise NonPositiveForLog(
                    f"column {names[j]} has non-positive values under log_diff_400")
            col = 400.0 * np.diff(np.log(col))
        elif any_diff:
            col = col[1:]
        columns.append(col)
    if any_diff and dates is not None:
        dates = dates[1:]
    return Dataset(np.column_stack(columns), names, transforms, dates)


def permute_columns(data: Dataset, order) -> Dataset:
    """Reorder columns (0-based index permutation); names and transforms move
    with their columns."""
    order = list(order)
    if sorted(order) != list(range(data.n)):
        raise NotAPermutation(f"{order} is not a permutation of 0..{data.n - 1}")
    return Dataset(
        data.values[:, order],
        [data.names[j] for j in order],
        [data.transforms[j] for j in order],
        data.dates,
    )
