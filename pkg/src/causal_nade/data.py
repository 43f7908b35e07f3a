"""Tabular datasets: named float columns, hidden-column flags, CSV round trip.

Binary variables are stored as 0.0/1.0. Columns flagged hidden represent
unobservable quantities produced by a data-generating process; the training
pipeline only ever sees the ``observed()`` view, and the CSV writer marks them
with a ``~`` prefix in the header.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

HIDDEN_PREFIX = "~"


class DataError(ValueError):
    pass


class MissingColumnError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    columns: tuple[str, ...]
    rows: np.ndarray
    hidden: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        cols = tuple(str(c) for c in self.columns)
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise DataError(f"rows must be 2-D, got shape {rows.shape}")
        if rows.shape[1] != len(cols):
            raise DataError(
                f"{len(cols)} column names but rows have width {rows.shape[1]}"
            )
        if len(set(cols)) != len(cols):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(rows)):
            raise DataError("dataset contains non-finite values")
        hidden = frozenset(self.hidden)
        if not hidden <= set(cols):
            raise DataError("hidden flags name columns that do not exist")
        rows = np.ascontiguousarray(rows)
        rows.flags.writeable = False
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "hidden", hidden)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MissingColumnError(f"no column named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.index(name)]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.zeros((self.n, 0))
        return self.rows[:, [self.index(n) for n in names]]

    def observed(self) -> "Dataset":
        """The dataset with every hidden column removed."""
        if not self.hidden:
            return self
        keep = [c for c in self.columns if c not in self.hidden]
        return Dataset(tuple(keep), self.matrix(keep))

    def take(self, idx) -> "Dataset":
        """Row subset / resample by index array (used by the bootstrap)."""
        return Dataset(self.columns, self.rows[np.asarray(idx, dtype=int)], self.hidden)


def from_columns(cols: Mapping[str, Iterable[float]], hidden: Iterable[str] = ()) -> Dataset:
    names = tuple(cols)
    if not names:
        return Dataset((), np.zeros((0, 0)))
    arrays = [np.asarray(cols[n], dtype=float) for n in names]
    return Dataset(names, np.column_stack(arrays), frozenset(hidden))


def _fmt(v: float) -> str:
    return repr(float(v))


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            [HIDDEN_PREFIX + c if c in ds.hidden else c for c in ds.columns]
        )
        for row in ds.rows:
            w.writerow([_fmt(v) for v in row])


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        names, hidden = [], set()
        for h in header:
            if h.startswith(HIDDEN_PREFIX):
                h = h[len(HIDDEN_PREFIX):]
                hidden.add(h)
            names.append(h)
        body = [[float(cell) for cell in row] for row in r if row]
    rows = np.array(body, dtype=float) if body else np.zeros((0, len(names)))
    return Dataset(tuple(names), rows, frozenset(hidden))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Small deterministic CSV writer for result tables (floats via repr)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            out = []
            for v in row:
                if isinstance(v, (bool, np.bool_)):
                    out.append(str(v))
                elif isinstance(v, (int, np.integer)):
                    out.append(str(int(v)))
                elif isinstance(v, (float, np.floating)):
                    out.append(_fmt(v))
                else:
                    out.append(str(v))
            w.writerow(out)
