"""Column-typed tables, CSV ingestion and Pearson correlation."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CsvFormatError, DataQualityWarning, NumericalError, ValidationError

logger = logging.getLogger(__name__)

ROLES = ("feature", "outcome", "treatment", "ignored")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FrameTable:
    """Immutable numeric table with a role per column.

    ``data`` is an ``(n, d)`` float64 array; column ``j`` is named
    ``column_names[j]``.  Columns without an explicit role default to
    ``"feature"``.
    """

    column_names: tuple[str, ...]
    data: np.ndarray
    roles: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.column_names)
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError("table data must be two-dimensional")
        if data.shape[1] != len(names):
            raise ValidationError(
                f"{len(names)} column names for {data.shape[1]} data columns")
        if data.shape[0] < 1:
            raise ValidationError("table needs at least one row")
        if any(not n for n in names):
            raise ValidationError("column names must be non-empty")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate column names: {dup}")
        roles = {n: "feature" for n in names}
        for name, role in dict(self.roles).items():
            if name not in roles:
                raise ValidationError(f"role given for unknown column {name!r}")
            if role not in ROLES:
                raise ValidationError(f"unknown role {role!r} for column {name!r}")
            roles[name] = role
        if sum(r == "outcome" for r in roles.values()) > 1:
            raise ValidationError("at most one column may hold the outcome role")
        for name, role in roles.items():
            if role == "treatment":
                col = data[:, names.index(name)]
                if not np.all((col == 0.0) | (col == 1.0)):
                    raise ValidationError(f"treatment column {name!r} must be 0/1")
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "roles", roles)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]],
                     roles: Mapping[str, str] | None = None) -> "FrameTable":
        names = list(columns)
        lengths = {len(columns[n]) for n in names}
        if len(lengths) > 1:
            raise ValidationError("all columns must have identical length")
        data = np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names])
        return cls(tuple(names), data, dict(roles or {}))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def names_with_role(self, role: str) -> list[str]:
        return [n for n in self.column_names if self.roles[n] == role]

    @property
    def feature_names(self) -> list[str]:
        return self.names_with_role("feature")

    @property
    def outcome_name(self) -> str | None:
        out = self.names_with_role("outcome")
        return out[0] if out else None

    def matrix(self, names: Iterable[str] | None = None) -> np.ndarray:
        """Return the columns ``names`` (default: feature columns) as an array."""
        names = self.feature_names if names is None else list(names)
        return self.data[:, [self.index(n) for n in names]]

    def select(self, names: Sequence[str]) -> "FrameTable":
        names = list(names)
        return FrameTable(tuple(names), self.matrix(names),
                          {n: self.roles[n] for n in names})

    def take(self, rows: Sequence[int] | np.ndarray) -> "FrameTable":
        return FrameTable(self.column_names, self.data[np.asarray(rows)], self.roles)

    def with_roles(self, **roles: str) -> "FrameTable":
        merged = dict(self.roles)
        merged.update(roles)
        return FrameTable(self.column_names, self.data, merged)

    def with_column(self, name: str, values: Sequence[float], role: str = "feature") -> "FrameTable":
        if name in self.column_names:
            raise ValidationError(f"column {name!r} already exists")
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        if values.shape[0] != self.n:
            raise ValidationError("new column length does not match table")
        roles = dict(self.roles)
        roles[name] = role
        return FrameTable(self.column_names + (name,), np.hstack([self.data, values]), roles)


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    rho: np.ndarray
    warnings: tuple[str, ...] = ()

    def to_csv(self, path: str | Path) -> None:
        rows = [[name, *map(_fmt, self.rho[i])] for i, name in enumerate(self.names)]
        write_csv(path, ["feature", *self.names], rows)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows with round-trip float formatting and ``\\n`` line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _parse_cell(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def load_csv(path: str | Path, *, impute: str = "none", missing: str = "",
             roles: Mapping[str, str] | None = None) -> FrameTable:
    """Read a header-first numeric CSV into a :class:`FrameTable`.

    Cells equal to ``missing`` (after stripping whitespace) are missing.
    With ``impute="mean"`` they are replaced by the mean of the observed
    cells of that column; otherwise any missing cell is an error.
    """
    if impute not in ("none", "mean"):
        raise ValidationError(f"impute must be 'none' or 'mean', got {impute!r}")
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise CsvFormatError(f"{path}: empty column name in header")
    seen = set()
    for h in header:
        if h in seen:
            raise CsvFormatError(f"{path}: duplicate header {h!r}")
        seen.add(h)
    body = rows[1:]
    if not body:
        raise CsvFormatError(f"{path}: header but no data rows")

    d = len(header)
    data = np.empty((len(body), d))
    holes = np.zeros((len(body), d), dtype=bool)
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != d:
            raise CsvFormatError(
                f"{path}: line {line} has {len(row)} cells, header has {d}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing:
                holes[r, c] = True
                data[r, c] = np.nan
                continue
            try:
                data[r, c] = _parse_cell(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {line}, column {header[c]!r}: non-numeric cell {cell!r}"
                ) from None

    if holes.any():
        if impute != "mean":
            r, c = map(int, np.argwhere(holes)[0])
            raise CsvFormatError(
                f"{path}: line {r + 2}, column {header[c]!r}: missing cell "
                "(enable mean imputation to fill it)")
        for c in np.flatnonzero(holes.any(axis=0)):
            observed = data[~holes[:, c], c]
            if observed.size == 0:
                raise CsvFormatError(f"{path}: column {header[c]!r} has no observed values")
            data[holes[:, c], c] = observed.mean()
        logger.info("imputed %d missing cells in %s", int(holes.sum()), path)

    return FrameTable(tuple(header), data, dict(roles or {}))


def pearson_matrix(table: FrameTable, names: Sequence[str] | None = None) -> CorrelationMatrix:
    """Sample Pearson correlations between ``names`` (default: feature columns).

    A zero-variance column has correlation 0 with every other column; this
    is recorded in ``warnings`` and emitted as a :class:`DataQualityWarning`.
    """
    names = table.feature_names if names is None else list(names)
    if not names:
        raise ValidationError("correlation needs at least one feature column")
    if table.n < 2:
        raise NumericalError("correlation needs at least two rows")
    X = table.matrix(names)
    centered = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    constant = np.ptp(X, axis=0) == 0
    notes = []
    for j in np.flatnonzero(constant):
        notes.append(f"column {names[j]!r} has zero variance; correlations set to 0")
        warnings.warn(notes[-1], DataQualityWarning, stacklevel=2)
    safe = np.where(constant, 1.0, norms)
    unit = centered / safe
    unit[:, constant] = 0.0
    rho = unit.T @ unit
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return CorrelationMatrix(tuple(names), _frozen(rho), tuple(notes))


def binarize_at_median(table: FrameTable, column: str) -> FrameTable:
    """Add ``<column>__hi`` = 1 where the cell is strictly above the median.

    Ties with the median go to the control arm.
    """
    values = table.column(column)
    if np.unique(values).size < 2:
        raise NumericalError(f"column {column!r} is constant; cannot form two arms")
    hi = (values > np.median(values)).astype(np.float64)
    if hi.min() == hi.max():
        raise NumericalError(
            f"column {column!r}: no cell lies strictly above the median")
    return table.with_column(f"{column}__hi", hi, role="treatment")
