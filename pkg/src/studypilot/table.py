"""Typed patient tables: schema declaration, CSV ingest, canonical output.

A schema declares each column's name, type and analysis role; the table
stores columns as NumPy arrays plus an explicit missingness mask, so that
downstream code never guesses what an empty cell meant.  CSV ingest is
strict: any cell that does not parse under the declared type is reported
with its row and column rather than coerced.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SchemaError",
    "IngestError",
    "ColumnSpec",
    "Schema",
    "Column",
    "PatientTable",
    "TableReport",
    "load_schema",
    "ingest_csv",
]

COLUMN_TYPES = ("id", "binary", "real", "categorical", "ordered")
ROLES = ("id", "treatment", "outcome", "centre", "covariate", "other")

_BINARY_TOKENS = {"0": 0, "1": 1, "true": 1, "false": 0, "TRUE": 1, "FALSE": 0}


class SchemaError(ValueError):
    """Schema file or declaration problems."""


class IngestError(ValueError):
    """CSV data problems; carries (row, column, message) triples."""

    def __init__(self, problems: Sequence[tuple[int, str, str]], truncated=False):
        self.problems = list(problems)
        lines = [f"  row {r}, column {c!r}: {m}" for r, c, m in self.problems]
        if truncated:
            lines.append("  (stopping after 20 problems)")
        super().__init__("cannot ingest data:\n" + "\n".join(lines))


@dataclass(frozen=True)
class ColumnSpec:
    """Declared name, storage type and analysis role of one column."""

    name: str
    ctype: str
    role: str = "other"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.ctype not in COLUMN_TYPES:
            raise SchemaError(f"column {self.name!r}: unknown type {self.ctype!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.ctype in ("categorical", "ordered"):
            if len(self.levels) < 2:
                raise SchemaError(
                    f"column {self.name!r}: {self.ctype} column needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"column {self.name!r}: duplicate levels")
            if any(lv == "" for lv in self.levels):
                raise SchemaError(f"column {self.name!r}: empty level label")
        elif self.levels:
            raise SchemaError(
                f"column {self.name!r}: levels only apply to categorical/ordered")

    def numeric_levels(self) -> list[float] | None:
        """Level values as floats when every label parses, else None."""
        if self.ctype not in ("categorical", "ordered"):
            return None
        try:
            return [float(lv) for lv in self.levels]
        except ValueError:
            return None


class Schema:
    """An ordered collection of column specs with role constraints.

    Exactly one ``id`` column is required; at most one column may carry each
    of the ``treatment`` (binary), ``outcome`` (binary) and ``centre``
    (categorical) roles.
    """

    def __init__(self, columns: Iterable[ColumnSpec]):
        self.columns: tuple[ColumnSpec, ...] = tuple(columns)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupe = next(n for n in names if names.count(n) > 1)
            raise SchemaError(f"duplicate column name {dupe!r}")
        self._by_name = {c.name: c for c in self.columns}

        ids = [c for c in self.columns if c.role == "id"]
        if len(ids) != 1:
            raise SchemaError(f"schema needs exactly one id column, found {len(ids)}")
        if ids[0].ctype != "id":
            raise SchemaError("the id-role column must have type 'id'")
        for role, want_type in (("treatment", "binary"), ("outcome", "binary"),
                                ("centre", "categorical")):
            tagged = [c for c in self.columns if c.role == role]
            if len(tagged) > 1:
                raise SchemaError(f"at most one {role} column allowed")
            if tagged and tagged[0].ctype != want_type:
                raise SchemaError(
                    f"{role} column {tagged[0].name!r} must be {want_type}, "
                    f"not {tagged[0].ctype}")

    def __iter__(self):
        return iter(self.columns)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> ColumnSpec:
        if name not in self._by_name:
            raise SchemaError(f"unknown column {name!r}")
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def with_role(self, role: str) -> list[ColumnSpec]:
        return [c for c in self.columns if c.role == role]

    def single(self, role: str) -> ColumnSpec:
        """The unique column with ``role``, or a SchemaError naming the gap."""
        tagged = self.with_role(role)
        if not tagged:
            raise SchemaError(f"schema declares no {role} column")
        return tagged[0]

    def to_dict(self) -> dict:
        return {"columns": [
            {"name": c.name, "type": c.ctype, "role": c.role,
             **({"levels": list(c.levels)} if c.levels else {})}
            for c in self.columns]}

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        if not isinstance(data, dict) or "columns" not in data:
            raise SchemaError("schema document needs a top-level 'columns' list")
        cols = []
        for entry in data["columns"]:
            cols.append(ColumnSpec(
                name=entry.get("name", ""),
                ctype=entry.get("type", ""),
                role=entry.get("role", "other"),
                levels=tuple(entry.get("levels", ()))))
        return cls(cols)


def load_schema(source) -> Schema:
    """Load a schema from a JSON file path, JSON text, or parsed dict."""
    if isinstance(source, dict):
        return Schema.from_dict(source)
    text = Path(source).read_text() if _looks_like_path(source) else source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema is not valid JSON: {exc}") from exc
    return Schema.from_dict(data)


def _looks_like_path(source) -> bool:
    if isinstance(source, Path):
        return True
    return isinstance(source, str) and "\n" not in source and "{" not in source


@dataclass
class Column:
    spec: ColumnSpec
    values: np.ndarray
    missing: np.ndarray

    def as_numeric(self) -> np.ndarray:
        """Float view for estimation; ordered columns use their level values.

        Missing entries come back as NaN.  Categorical columns have no single
        numeric reading and must be one-hot encoded instead.
        """
        if self.spec.ctype == "categorical":
            raise SchemaError(
                f"column {self.spec.name!r} is categorical; encode it per level")
        if self.spec.ctype == "id":
            raise SchemaError("the id column has no numeric reading")
        if self.spec.ctype == "ordered":
            nums = self.spec.numeric_levels()
            table = np.asarray(nums if nums is not None
                               else range(len(self.spec.levels)), dtype=float)
            out = table[np.where(self.missing, 0, self.values)]
        else:
            out = self.values.astype(float)
        out = out.copy()
        out[self.missing] = np.nan
        return out

    def level_labels(self) -> np.ndarray:
        """String labels for categorical/ordered values ('' where missing)."""
        table = np.asarray(self.spec.levels, dtype=object)
        out = table[np.where(self.missing, 0, self.values)].copy()
        out[self.missing] = ""
        return out


@dataclass
class TableReport:
    """Ingest summary: row count and per-column missing counts."""

    n_rows: int
    missing: dict[str, int]


class PatientTable:
    """Immutable columnar table with explicit missingness.

    Use :func:`ingest_csv` to build one from data, or ``from_columns`` when
    generating rows programmatically.
    """

    def __init__(self, schema: Schema, columns: dict[str, Column], n_rows: int):
        self.schema = schema
        self._columns = columns
        self.n_rows = n_rows

    @classmethod
    def from_columns(cls, schema: Schema, data: dict[str, tuple]) -> "PatientTable":
        """Build from ``{name: (values, missing_mask_or_None)}`` arrays."""
        cols: dict[str, Column] = {}
        n_rows = None
        for spec in schema:
            if spec.name not in data:
                raise SchemaError(f"missing data for column {spec.name!r}")
            values, missing = data[spec.name]
            values = np.asarray(values)
            if missing is None:
                missing = np.zeros(values.shape[0], dtype=bool)
            missing = np.asarray(missing, dtype=bool)
            if n_rows is None:
                n_rows = values.shape[0]
            if values.shape[0] != n_rows or missing.shape[0] != n_rows:
                raise SchemaError(f"column {spec.name!r}: length mismatch")
            cols[spec.name] = Column(spec, values, missing)
        ids = cols[schema.single("id").name]
        if ids.missing.any():
            raise SchemaError("id column cannot be missing")
        if len(set(ids.values.tolist())) != n_rows:
            raise SchemaError("id column must be unique")
        return cls(schema, cols, int(n_rows or 0))

    def column(self, name: str) -> Column:
        if name not in self._columns:
            raise SchemaError(f"unknown column {name!r}")
        return self._columns[name]

    @property
    def ids(self) -> np.ndarray:
        return self.column(self.schema.single("id").name).values

    def select(self, mask: np.ndarray) -> "PatientTable":
        """Row subset by boolean mask (or integer index array)."""
        cols = {n: Column(c.spec, c.values[mask], c.missing[mask])
                for n, c in self._columns.items()}
        n = next(iter(cols.values())).values.shape[0] if cols else 0
        return PatientTable(self.schema, cols, int(n))

    def complete_case(self, names: Sequence[str]) -> tuple["PatientTable", int]:
        """Drop rows missing any of ``names``; returns (table, n_dropped)."""
        keep = np.ones(self.n_rows, dtype=bool)
        for n in names:
            keep &= ~self.column(n).missing
        return self.select(keep), int(self.n_rows - keep.sum())

    def report(self) -> TableReport:
        return TableReport(
            n_rows=self.n_rows,
            missing={n: int(c.missing.sum()) for n, c in self._columns.items()})

    # -- canonical CSV -----------------------------------------------------

    def to_csv(self, target=None) -> str | None:
        """Write canonical CSV; ingest of the output reproduces this table
        with bitwise-identical values.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.schema.names)
        cells = [self._format_column(self.column(n)) for n in self.schema.names]
        for i in range(self.n_rows):
            writer.writerow([col[i] for col in cells])
        text = buf.getvalue()
        if target is None:
            return text
        Path(target).write_text(text)
        return None

    @staticmethod
    def _format_column(col: Column) -> list[str]:
        spec = col.spec
        out = []
        for i in range(col.values.shape[0]):
            if col.missing[i]:
                out.append("")
            elif spec.ctype == "id":
                out.append(str(col.values[i]))
            elif spec.ctype == "binary":
                out.append("1" if col.values[i] else "0")
            elif spec.ctype == "real":
                out.append(repr(float(col.values[i])))
            else:
                out.append(spec.levels[int(col.values[i])])
        return out


def ingest_csv(source, schema: Schema) -> tuple[PatientTable, TableReport]:
    """Parse CSV ``source`` (path or text) under ``schema``.

    The header must match the schema's column names in order.  Empty cells
    are missing data (never allowed in the id column); unparseable cells,
    duplicate ids and ragged rows are collected into one :class:`IngestError`
    that references rows and columns.  Row numbers count the header as row 1.
    """
    text = Path(source).read_text() if _looks_like_path(source) else source
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise IngestError([(1, "", "no header row")])
    header = rows[0]
    if header != schema.names:
        raise IngestError([(1, "", f"header {header!r} does not match schema "
                            f"columns {schema.names!r}")])

    n = len(rows) - 1
    problems: list[tuple[int, str, str]] = []
    storage: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for spec in schema:
        if spec.ctype == "id":
            vals: np.ndarray = np.empty(n, dtype=object)
        elif spec.ctype == "binary":
            vals = np.zeros(n, dtype=np.int8)
        elif spec.ctype == "real":
            vals = np.zeros(n, dtype=np.float64)
        else:
            vals = np.zeros(n, dtype=np.int32)
        storage[spec.name] = (vals, np.zeros(n, dtype=bool))

    level_index = {c.name: {lv: i for i, lv in enumerate(c.levels)}
                   for c in schema if c.levels}
    seen_ids: dict[str, int] = {}

    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(schema.names):
            problems.append((r, "", f"expected {len(schema.names)} cells, "
                             f"found {len(row)}"))
            continue
        for spec, cell in zip(schema, row):
            vals, miss = storage[spec.name]
            i = r - 2
            if cell == "":
                if spec.ctype == "id":
                    problems.append((r, spec.name, "id may not be missing"))
                else:
                    miss[i] = True
                continue
            if spec.ctype == "id":
                if cell in seen_ids:
                    problems.append((r, spec.name,
                                     f"duplicate id {cell!r} (first at row "
                                     f"{seen_ids[cell]})"))
                else:
                    seen_ids[cell] = r
                vals[i] = cell
            elif spec.ctype == "binary":
                if cell not in _BINARY_TOKENS:
                    problems.append((r, spec.name,
                                     f"{cell!r} is not a binary value"))
                else:
                    vals[i] = _BINARY_TOKENS[cell]
            elif spec.ctype == "real":
                try:
                    v = float(cell)
                except ValueError:
                    problems.append((r, spec.name, f"{cell!r} is not a number"))
                    continue
                if not np.isfinite(v):
                    problems.append((r, spec.name, "real values must be finite"))
                else:
                    vals[i] = v
            else:
                idx = level_index[spec.name].get(cell)
                if idx is None:
                    problems.append((r, spec.name,
                                     f"{cell!r} is not a declared level"))
                else:
                    vals[i] = idx
        if len(problems) >= 20:
            break
    if problems:
        raise IngestError(problems[:20], truncated=len(problems) >= 20)

    columns = {spec.name: Column(spec, *storage[spec.name]) for spec in schema}
    table = PatientTable(schema, columns, n)
    return table, table.report()
