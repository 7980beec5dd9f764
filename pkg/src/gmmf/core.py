"""Data model shared by the estimators: datasets, CSV ingestion, grouped views."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NotGroupedError(DataError):
    """Instrument matrix is not a set of exclusive 0/1 group indicators."""


class DegenerateGroupError(DataError):
    """A group has fewer than two members."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A weight or moment matrix that must be positive definite is not."""


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, single endogenous regressor ``x`` and instruments ``Z``.

    ``cluster`` optionally assigns each row to a unit; when present, moment
    covariances are accumulated per unit (used by the dynamic panel).
    """

    y: np.ndarray
    x: np.ndarray
    Z: np.ndarray
    cluster: np.ndarray | None = field(default=None)

    def __post_init__(self):
        y = _frozen(self.y, 1, "y")
        x = _frozen(self.x, 1, "x")
        Z = _frozen(self.Z, 2, "Z")
        if not (len(y) == len(x) == Z.shape[0]):
            raise DataError(
                f"length mismatch: y={len(y)}, x={len(x)}, Z rows={Z.shape[0]}"
            )
        if Z.shape[1] < 1 or Z.shape[0] < Z.shape[1]:
            raise DataError(f"need n >= k_z >= 1, got n={Z.shape[0]}, k_z={Z.shape[1]}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "Z", Z)
        if self.cluster is not None:
            c = np.asarray(self.cluster)
            if c.shape != y.shape:
                raise DataError("cluster must have one entry per observation")
            _, codes = np.unique(c, return_inverse=True)
            codes = codes.astype(np.intp)
            codes.setflags(write=False)
            object.__setattr__(self, "cluster", codes)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k_z(self) -> int:
        return self.Z.shape[1]

    @cached_property
    def is_grouped(self) -> bool:
        """True when Z columns are mutually exclusive 0/1 indicators."""
        return _indicator_groups(self.Z) is not None


def _indicator_groups(Z: np.ndarray) -> np.ndarray | None:
    # exact equality on purpose: generated indicators are exact
    if not np.all((Z == 0.0) | (Z == 1.0)):
        return None
    if not np.all(Z.sum(axis=1) == 1.0):
        return None
    return np.argmax(Z, axis=1)


def load_dataset(
    path: str | Path, y_col: str, x_col: str, z_cols: Sequence[str]
) -> Dataset:
    """Read a headed CSV file into a :class:`Dataset`.

    Columns are taken in the order given by ``z_cols``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        wanted = [y_col, x_col, *z_cols]
        idx = []
        for name in wanted:
            if name not in header:
                raise DataError(f"{path}: column not found: {name!r}")
            idx.append(header.index(name))
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for name, j in zip(wanted, idx):
                cell = row[j].strip() if j < len(row) else ""
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {name!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows)
    if data.shape[0] < len(z_cols):
        raise DataError(f"{path}: n={data.shape[0]} < k_z={len(z_cols)}")
    return Dataset(y=data[:, 0], x=data[:, 1], Z=data[:, 2:])


@dataclass(frozen=True, eq=False)
class GroupedView:
    """Per-group counts and means of a dataset with indicator instruments.

    ``group_index`` holds 0-based group ids (column index of ``Z``).
    """

    group_index: np.ndarray
    n_s: np.ndarray
    xbar: np.ndarray
    ybar: np.ndarray

    @property
    def S(self) -> int:
        return self.n_s.shape[0]

    @property
    def n(self) -> int:
        return int(self.n_s.sum())


def grouped_view(d: Dataset) -> GroupedView:
    g = _indicator_groups(d.Z)
    if g is None:
        raise NotGroupedError("not grouped data: Z is not a 0/1 indicator matrix with unit row sums")
    S = d.k_z
    n_s = np.bincount(g, minlength=S)
    small = np.flatnonzero(n_s < 2)
    if small.size:
        raise DegenerateGroupError(
            f"degenerate group: group(s) {', '.join(str(s + 1) for s in small)} "
            f"have fewer than 2 members"
        )
    xbar = np.bincount(g, weights=d.x, minlength=S) / n_s
    ybar = np.bincount(g, weights=d.y, minlength=S) / n_s
    for a in (g, n_s, xbar, ybar):
        a.setflags(write=False)
    return GroupedView(group_index=g, n_s=n_s, xbar=xbar, ybar=ybar)
