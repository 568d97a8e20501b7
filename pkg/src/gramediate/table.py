"""Categorical data: variable schemas, observation records and contingency tables.

Cell order everywhere is lexicographic with the last schema variable varying
fastest, which is numpy's C order for an array shaped by the level counts.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataError",
    "VariableSchema",
    "ObservationRecords",
    "ContingencyTable",
    "parse_csv",
    "crosstab",
    "marginalize",
    "expand",
    "embedded_dataset",
    "TRANSCRIBED_COUNTS",
]


class DataError(ValueError):
    """Malformed input data (bad CSV, unknown level, inconsistent schema)."""


@dataclass(frozen=True)
class VariableSchema:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(x) for x in self.levels))
        if not self.name:
            raise DataError("variable name must be nonempty")
        if len(self.levels) < 2:
            raise DataError(f"variable {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise DataError(f"variable {self.name!r} has duplicate level labels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def to_json(self) -> dict:
        return {"name": self.name, "levels": list(self.levels)}


def _check_schema(schema: Sequence[VariableSchema]) -> tuple[VariableSchema, ...]:
    schema = tuple(schema)
    names = [v.name for v in schema]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate variable names in schema: {names}")
    return schema


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservationRecords:
    """Long-format data: one row of level indices per observed unit."""

    schema: tuple[VariableSchema, ...]
    rows: np.ndarray

    def __post_init__(self):
        schema = _check_schema(self.schema)
        rows = np.array(self.rows, dtype=np.int64).reshape(-1, len(schema))
        for j, var in enumerate(schema):
            col = rows[:, j]
            if col.size and (col.min() < 0 or col.max() >= var.n_levels):
                raise DataError(f"level index out of range for {var.name!r}")
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "rows", _frozen(rows))

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.schema)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]

    def take(self, index) -> "ObservationRecords":
        return ObservationRecords(self.schema, self.rows[index])

    def select(self, names: Sequence[str]) -> "ObservationRecords":
        """Project onto ``names`` (in the given order)."""
        idx = [self.names.index(n) for n in names]
        return ObservationRecords(tuple(self.schema[i] for i in idx), self.rows[:, idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        for row in self.rows:
            w.writerow([v.levels[i] for v, i in zip(self.schema, row)])
        return buf.getvalue()


class ContingencyTable:
    """Counts over the cross-classification of categorical variables.

    Observed tables hold integers; fitted tables hold nonnegative reals and
    share every margin operation. ``is_integer`` guards integer-only
    operations such as :func:`expand`.
    """

    __slots__ = ("schema", "counts")

    def __init__(self, schema: Sequence[VariableSchema], counts):
        schema = _check_schema(schema)
        shape = tuple(v.n_levels for v in schema)
        arr = np.array(counts, dtype=float)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise DataError(
                f"expected {int(np.prod(shape))} cells for shape {shape}, got {arr.size}"
            )
        arr = arr.reshape(shape)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise DataError("counts must be finite and nonnegative")
        self.schema = schema
        self.counts = _frozen(arr)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.schema)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts.shape

    @property
    def n_cells(self) -> int:
        return self.counts.size

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def is_integer(self) -> bool:
        return bool(np.all(self.counts == np.round(self.counts)))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown variable {name!r}; have {list(self.names)}") from None

    def variable(self, name: str) -> VariableSchema:
        return self.schema[self.axis(name)]

    def __getitem__(self, cell: dict | tuple) -> float:
        if isinstance(cell, dict):
            cell = tuple(cell[n] for n in self.names)
        return float(self.counts[cell])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        dims = "x".join(str(s) for s in self.shape)
        return f"ContingencyTable({', '.join(self.names)}; {dims}; total={self.total:g})"

    def reorder(self, names: Sequence[str]) -> "ContingencyTable":
        """Permute the axes into the order given by ``names``."""
        names = list(names)
        if sorted(names) != sorted(self.names):
            raise DataError(f"reorder needs a permutation of {list(self.names)}")
        perm = [self.axis(n) for n in names]
        return ContingencyTable(
            [self.schema[i] for i in perm], np.transpose(self.counts, perm)
        )

    def to_json(self) -> dict:
        counts = self.counts.ravel()
        if self.is_integer:
            counts = counts.astype(np.int64)
        return {
            "schema": [v.to_json() for v in self.schema],
            "counts": counts.tolist(),
            "order": "lex-last-fastest",
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "ContingencyTable":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if obj.get("order", "lex-last-fastest") != "lex-last-fastest":
            raise DataError(f"unsupported cell order {obj['order']!r}")
        schema = [VariableSchema(v["name"], tuple(v["levels"])) for v in obj["schema"]]
        return cls(schema, obj["counts"])


def parse_csv(text: str | io.TextIOBase, schema: Sequence[VariableSchema]) -> ObservationRecords:
    """Read long-format CSV (header = variable names, one observation per line).

    Values may be level labels or 0-based level indices; a value that is a
    declared label is always read as that label.
    """
    schema = _check_schema(schema)
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("line 1: empty input, expected a header row") from None
    by_name = {v.name: v for v in schema}
    for h in header:
        if h not in by_name:
            raise DataError(f"line 1: unknown column {h!r}")
    missing = [v.name for v in schema if v.name not in header]
    if missing:
        raise DataError(f"line 1: missing columns {missing}")
    if len(set(header)) != len(header):
        raise DataError("line 1: duplicate column names")
    col_of = [header.index(v.name) for v in schema]
    lookup = [{lab: i for i, lab in enumerate(v.levels)} for v in schema]

    rows = []
    for lineno, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise DataError(
                f"line {lineno}: ragged row, expected {len(header)} fields, got {len(fields)}"
            )
        row = []
        for var, col, table in zip(schema, col_of, lookup):
            value = fields[col].strip()
            if value in table:
                row.append(table[value])
                continue
            try:
                idx = int(value)
            except ValueError:
                idx = -1
            if not 0 <= idx < var.n_levels:
                raise DataError(f"line {lineno}: unknown level {value!r} for {var.name!r}")
            row.append(idx)
        rows.append(row)
    return ObservationRecords(schema, np.array(rows, dtype=np.int64).reshape(-1, len(schema)))


def crosstab(records: ObservationRecords) -> ContingencyTable:
    shape = tuple(v.n_levels for v in records.schema)
    flat = np.ravel_multi_index(records.rows.T, shape) if len(records) else np.array([], int)
    counts = np.bincount(flat, minlength=int(np.prod(shape)))
    return ContingencyTable(records.schema, counts.reshape(shape))


def marginalize(table: ContingencyTable, keep: Iterable[str]) -> ContingencyTable:
    """Sum out every variable not in ``keep``; kept axes stay in schema order."""
    keep = set(keep)
    if not keep:
        raise DataError("marginalize needs at least one variable to keep")
    unknown = keep - set(table.names)
    if unknown:
        raise DataError(f"cannot keep unknown variables {sorted(unknown)}")
    drop = tuple(i for i, n in enumerate(table.names) if n not in keep)
    schema = [v for v in table.schema if v.name in keep]
    return ContingencyTable(schema, table.counts.sum(axis=drop))


def expand(table: ContingencyTable) -> ObservationRecords:
    """Unit records for an integer table, one per count, in cell order."""
    if not table.is_integer:
        raise DataError("expand requires integer counts")
    reps = table.counts.ravel().astype(np.int64)
    cells = np.repeat(np.arange(table.n_cells), reps)
    rows = np.array(np.unravel_index(cells, table.shape), dtype=np.int64).T
    return ObservationRecords(table.schema, rows.reshape(-1, len(table.schema)))


# Source transcription. Rows are (SSC-F, TIME); columns are IC=0 then IC=1, each
# with SSC-W = 0..3.
TRANSCRIBED_COUNTS = (
    ((0, 0), (53, 10, 6, 6, 83, 11, 6, 5)),
    ((1, 0), (10, 35, 7, 0, 15, 39, 13, 1)),
    ((2, 0), (8, 18, 46, 12, 16, 28, 41, 4)),
    ((3, 0), (3, 8, 17, 22, 4, 6, 19, 24)),
    ((0, 1), (45, 5, 5, 4, 69, 9, 6, 3)),
    ((1, 1), (10, 22, 6, 0, 11, 18, 5, 0)),
    ((2, 1), (10, 14, 37, 4, 10, 14, 22, 3)),
    ((3, 1), (4, 1, 4, 17, 6, 4, 13, 12)),
    ((0, 2), (47, 9, 2, 5, 87, 5, 7, 2)),
    ((1, 2), (13, 24, 4, 1, 11, 12, 6, 2)),
    ((2, 2), (15, 12, 22, 4, 12, 12, 4, 1)),
    ((3, 2), (2, 0, 5, 17, 3, 3, 3, 12)),
)

# The printed table sums to 1333; the (IC=1, TIME=2) slice is 10 short of the
# 192 records stated for it. Cell (F=2, W=2, TIME=2, IC=1) = 14 is the only
# single-cell correction that reproduces all reference G^2 values.
_CORRECTIONS = {(2, 2, 2, 1): 14}

EMBEDDED_SCHEMA = (
    VariableSchema("SSC-F", ("0", "1", "2", "3")),
    VariableSchema("SSC-W", ("0", "1", "2", "3")),
    VariableSchema("TIME", ("0", "1", "2")),
    VariableSchema("IC", ("0", "1")),
)


def embedded_dataset(printed: bool = False) -> ContingencyTable:
    """The 4x4x3x2 fatigue/weakness/time/treatment table (1343 observations).

    Schema order is SSC-F, SSC-W, TIME, IC. With ``printed=True`` the
    uncorrected transcription (total 1333) is returned instead.
    """
    counts = np.zeros((4, 4, 3, 2), dtype=np.int64)
    for (f, t), row in TRANSCRIBED_COUNTS:
        for ic in range(2):
            for w in range(4):
                counts[f, w, t, ic] = row[4 * ic + w]
    if not printed:
        for cell, value in _CORRECTIONS.items():
            counts[cell] = value
    return ContingencyTable(EMBEDDED_SCHEMA, counts)
