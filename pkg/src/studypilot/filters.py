"""Stratum filters: a small boolean expression language over table columns.

Filters describe sub-populations, e.g.::

    wfns == 1 and rebleed == 0 and ab_ratio > 0.12

The parser type-checks every comparison against the schema at parse time,
so a filter that survives parsing cannot fail on data.  Rows with missing
values in any referenced column are excluded as *missing* (reported
separately from rows that simply do not match).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .table import ColumnSpec, PatientTable, Schema

__all__ = ["FilterError", "StratumFilter", "FilterEval", "StratumResult",
           "parse_filter", "apply_stratum"]


class FilterError(ValueError):
    """Filter syntax or type problems; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"at position {position}: {message}")
        self.position = position


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<punct>[(){},])
  | (?P<word>[A-Za-z_][A-Za-z0-9_\-]*)
""", re.VERBOSE)

_KEYWORDS = {"and", "or", "not", "in", "true", "false"}


@dataclass(frozen=True)
class _Token:
    kind: str  # number | string | op | punct | word | end
    text: str
    pos: int


def _shown(tok: "_Token") -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


def _tokenize(text: str) -> list[_Token]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise FilterError(f"unexpected character {text[i]!r}", i)
        i = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        out.append(_Token(kind, m.group(0), m.start()))
    out.append(_Token("end", "", len(text)))
    return out


# -- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class _Always:
    value: bool

    def mask(self, table: PatientTable) -> np.ndarray:
        return np.full(table.n_rows, self.value, dtype=bool)


@dataclass(frozen=True)
class _Compare:
    column: str
    op: str
    literal: Union[float, str, int]

    def mask(self, table: PatientTable) -> np.ndarray:
        col = table.column(self.column)
        spec = col.spec
        if spec.ctype == "id":
            vals = col.values.astype(str)
            lhs, rhs = vals, self.literal
        elif spec.ctype == "real":
            lhs, rhs = col.values, self.literal
        elif spec.ctype == "binary":
            lhs, rhs = col.values, self.literal
        elif spec.numeric_levels() is not None:
            table_vals = np.asarray(spec.numeric_levels())
            lhs = table_vals[np.where(col.missing, 0, col.values)]
            rhs = self.literal
        else:
            lhs, rhs = col.values, self.literal  # level indices
        ops = {"==": np.equal, "!=": np.not_equal, "<": np.less,
               "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}
        return np.asarray(ops[self.op](lhs, rhs), dtype=bool)


@dataclass(frozen=True)
class _Member:
    column: str
    literals: tuple

    def mask(self, table: PatientTable) -> np.ndarray:
        col = table.column(self.column)
        spec = col.spec
        if spec.ctype == "id":
            vals = col.values.astype(str)
        elif spec.numeric_levels() is not None:
            vals = np.asarray(spec.numeric_levels())[
                np.where(col.missing, 0, col.values)]
        else:
            vals = col.values
        return np.isin(vals, np.asarray(self.literals))


@dataclass(frozen=True)
class _Not:
    inner: object

    def mask(self, table):
        return ~self.inner.mask(table)


@dataclass(frozen=True)
class _And:
    left: object
    right: object

    def mask(self, table):
        return self.left.mask(table) & self.right.mask(table)


@dataclass(frozen=True)
class _Or:
    left: object
    right: object

    def mask(self, table):
        return self.left.mask(table) | self.right.mask(table)


# -- parser -------------------------------------------------------------------

_ORDER_OPS = ("<", "<=", ">", ">=")


class _Parser:
    def __init__(self, tokens: list[_Token], schema: Schema):
        self.tokens = tokens
        self.schema = schema
        self.pos = 0
        self.columns: set[str] = set()

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.take()
        if tok.text != text:
            raise FilterError(f"expected {text!r}, found {_shown(tok)}", tok.pos)
        return tok

    def parse(self):
        node = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise FilterError(f"unexpected {tok.text!r}", tok.pos)
        return node

    def or_expr(self):
        node = self.and_expr()
        while self.peek().text == "or":
            self.take()
            node = _Or(node, self.and_expr())
        return node

    def and_expr(self):
        node = self.not_expr()
        while self.peek().text == "and":
            self.take()
            node = _And(node, self.not_expr())
        return node

    def not_expr(self):
        if self.peek().text == "not":
            self.take()
            return _Not(self.not_expr())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok.text == "(":
            self.take()
            node = self.or_expr()
            self.expect(")")
            return node
        if tok.text in ("true", "false"):
            self.take()
            return _Always(tok.text == "true")
        if tok.kind != "word" or tok.text in _KEYWORDS:
            raise FilterError(f"expected a column name, found {_shown(tok)}",
                              tok.pos)
        self.take()
        if tok.text not in self.schema:
            raise FilterError(f"unknown column {tok.text!r}", tok.pos)
        spec = self.schema[tok.text]
        self.columns.add(tok.text)
        nxt = self.take()
        if nxt.kind == "op":
            lit_tok = self.take()
            literal = self._check_literal(spec, nxt.text, lit_tok)
            return _Compare(spec.name, nxt.text, literal)
        if nxt.text == "in":
            self.expect("{")
            lits = [self._check_literal(spec, "in", self.take())]
            while self.peek().text == ",":
                self.take()
                lits.append(self._check_literal(spec, "in", self.take()))
            self.expect("}")
            return _Member(spec.name, tuple(lits))
        raise FilterError("expected a comparison operator or 'in', found "
                          f"{_shown(nxt)}", nxt.pos)

    # -- literal type checking ------------------------------------------

    def _check_literal(self, spec: ColumnSpec, op: str, tok: _Token):
        if tok.kind not in ("number", "string") and \
                tok.text not in ("true", "false"):
            raise FilterError(f"expected a literal, found {_shown(tok)}", tok.pos)

        if spec.ctype == "real":
            if tok.kind != "number":
                raise FilterError(f"column {spec.name!r} is real; "
                                  f"{tok.text!r} is not a number", tok.pos)
            return float(tok.text)

        if spec.ctype == "binary":
            if op in _ORDER_OPS:
                raise FilterError(f"column {spec.name!r} is binary; "
                                  f"order comparison {op!r} not defined", tok.pos)
            if tok.text in ("0", "1", "true", "false"):
                return int(tok.text in ("1", "true"))
            raise FilterError(f"column {spec.name!r} is binary; use 0, 1, "
                              f"true or false", tok.pos)

        if spec.ctype == "id":
            if op in _ORDER_OPS:
                raise FilterError("order comparison not defined for ids", tok.pos)
            if tok.kind != "string":
                raise FilterError(f"column {spec.name!r} holds identifiers; "
                                  f"quote the value", tok.pos)
            return tok.text[1:-1]

        # categorical / ordered
        numeric = spec.numeric_levels()
        if spec.ctype == "categorical" and op in _ORDER_OPS:
            raise FilterError(f"column {spec.name!r} is categorical (unordered); "
                              f"{op!r} not defined", tok.pos)
        if tok.kind == "string":
            label = tok.text[1:-1]
            if label not in spec.levels:
                raise FilterError(f"{label!r} is not a level of column "
                                  f"{spec.name!r} {list(spec.levels)}", tok.pos)
            if numeric is not None:
                return numeric[spec.levels.index(label)]
            return spec.levels.index(label)
        if tok.kind == "number":
            if numeric is None:
                raise FilterError(f"column {spec.name!r} has non-numeric levels; "
                                  f"use a quoted label", tok.pos)
            value = float(tok.text)
            if op in ("==", "!=", "in") and value not in numeric:
                raise FilterError(f"{tok.text} is not a level of column "
                                  f"{spec.name!r} {list(spec.levels)}", tok.pos)
            return value
        raise FilterError(f"invalid literal for column {spec.name!r}", tok.pos)


@dataclass
class FilterEval:
    """Row classification: matched, or excluded because of missing data."""

    match: np.ndarray
    missing: np.ndarray


@dataclass(frozen=True)
class StratumFilter:
    """A parsed, schema-checked filter expression."""

    text: str
    columns: frozenset[str]
    _ast: object

    def evaluate(self, table: PatientTable) -> FilterEval:
        """Classify each row.

        A row with a missing value in any column the filter references is
        excluded as missing, whatever the rest of the expression would say.
        """
        missing = np.zeros(table.n_rows, dtype=bool)
        for name in sorted(self.columns):
            missing |= table.column(name).missing
        match = self._ast.mask(table) & ~missing
        return FilterEval(match=match, missing=missing)


def parse_filter(text: str, schema: Schema) -> StratumFilter:
    """Parse and type-check ``text`` against ``schema``.

    Raises :class:`FilterError` with a character position for syntax errors,
    unknown columns, unknown levels and type mismatches.
    """
    parser = _Parser(_tokenize(text), schema)
    ast = parser.parse()
    return StratumFilter(text=text, columns=frozenset(parser.columns), _ast=ast)


@dataclass
class StratumResult:
    """A filtered table plus the exclusion accounting."""

    table: PatientTable
    n_input: int
    n_matched: int
    n_excluded_missing: int
    n_nonmatching: int

    def to_dict(self) -> dict:
        return {"n_input": self.n_input, "n_matched": self.n_matched,
                "n_excluded_missing": self.n_excluded_missing,
                "n_nonmatching": self.n_nonmatching}


def apply_stratum(table: PatientTable, filt: StratumFilter) -> StratumResult:
    """Restrict ``table`` to the rows matching ``filt``."""
    ev = filt.evaluate(table)
    sub = table.select(ev.match)
    return StratumResult(
        table=sub,
        n_input=table.n_rows,
        n_matched=int(ev.match.sum()),
        n_excluded_missing=int(ev.missing.sum()),
        n_nonmatching=int((~ev.match & ~ev.missing).sum()))
