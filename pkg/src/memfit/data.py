"""Numeric datasets with an explicit missing-value mask, plus CSV ingestion.

Missing cells are stored as NaN internally; only the literal ``NA`` and the
empty string mark a missing cell on disk. Any other non-numeric cell is a
format error, so a stray ``nan``/``inf`` never slips in silently.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataFormatError

MISSING_MARKERS = ("", "NA")


@dataclass
class Dataset:
    """Named float columns of equal length; NaN encodes a masked cell."""

    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise DataFormatError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataFormatError(
                    f"column {name!r} has {arr.shape[0]} rows, expected {n}"
                )
            if np.isinf(arr).any():
                raise DataFormatError(f"column {name!r} contains non-finite values")
            cols[name] = arr
        self.columns = cols

    @property
    def n(self) -> int:
        if not self.columns:
            return 0
        return next(iter(self.columns.values())).shape[0]

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"no column named {name!r}") from None

    def mask(self, name: str) -> np.ndarray:
        """Boolean mask of missing cells in a column."""
        return np.isnan(self.column(name))

    def masked_counts(self) -> dict[str, int]:
        return {name: int(np.isnan(col).sum()) for name, col in self.columns.items()}

    def repeat_columns(self, name: str) -> list[str]:
        """Columns ``<name>1``, ``<name>2``, ... present in the dataset, in order."""
        out = []
        k = 1
        while f"{name}{k}" in self.columns:
            out.append(f"{name}{k}")
            k += 1
        return out

    @classmethod
    def from_pandas(cls, frame) -> "Dataset":
        """Build a Dataset from a pandas DataFrame (NaN cells become masked)."""
        return cls({str(c): np.asarray(frame[c], dtype=np.float64) for c in frame.columns})

    def to_pandas(self):
        import pandas as pd

        return pd.DataFrame({name: col.copy() for name, col in self.columns.items()})


def _parse_cell(cell: str, row_idx: int, col_name: str) -> float:
    text = cell.strip()
    if text in MISSING_MARKERS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(
            f"non-numeric cell {cell!r} in column {col_name!r}, row {row_idx}"
        ) from None
    if not math.isfinite(value):
        raise DataFormatError(
            f"non-finite cell {cell!r} in column {col_name!r}, row {row_idx}"
        )
    return value


def read_csv(stream: io.TextIOBase) -> Dataset:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("no header") from None
    header = [h.strip() for h in header]
    if any(not h for h in header):
        raise DataFormatError("empty column name in header")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataFormatError(f"duplicate headers: {', '.join(dupes)}")
    rows = []
    for i, row in enumerate(reader):
        if len(row) != len(header):
            raise DataFormatError(
                f"ragged row {i + 1}: {len(row)} fields, expected {len(header)}"
            )
        rows.append([_parse_cell(cell, i, header[j]) for j, cell in enumerate(row)])
    data = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    return Dataset({name: data[:, j] for j, name in enumerate(header)})


def load_csv(path) -> Dataset:
    """Load a comma-delimited UTF-8 file; ``NA`` or empty cells are masked."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return read_csv(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc


def _format_cell(value: float) -> str:
    if math.isnan(value):
        return "NA"
    return repr(float(value))


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset; values round-trip exactly through :func:`load_csv`."""
    names = dataset.names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        cols = [dataset.column(name) for name in names]
        for i in range(dataset.n):
            writer.writerow([_format_cell(col[i]) for col in cols])
