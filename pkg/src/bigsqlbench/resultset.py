"""Tabular result model and the comparison primitives used by every metric.

A query result is a list of typed columns plus a multiset of rows.  Two
primitives drive all accuracy metrics: a containment indicator (is the
ground-truth table recoverable from the generated output?) and column-level
precision (what fraction of generated columns is actually wanted?).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

logger = logging.getLogger(__name__)

TYPE_TAGS = ("integer", "float", "text", "bool", "date", "null")

_IDENTIFIER_RE = re.compile(r"^[a-z_][a-z0-9_]*$")
_WHITESPACE_RE = re.compile(r"\s+")


class InvalidColumnNameError(ValueError):
    """Raised when a column name is empty or whitespace-only."""


class UndefinedPrecisionError(ValueError):
    """Raised when precision is requested for a table with no columns."""


@dataclass(frozen=True)
class FloatTolerance:
    """Relative tolerance with an absolute floor for float cell comparison."""

    relative: float = 1e-6
    absolute: float = 1e-9

    def equal(self, a: float, b: float) -> bool:
        if a == b:
            return True
        diff = abs(a - b)
        return diff <= max(self.absolute, self.relative * max(abs(a), abs(b)))


DEFAULT_TOLERANCE = FloatTolerance()


def normalize_column_name(raw: str) -> str:
    """Canonicalize a column name: lower-case, unquote, whitespace to underscores.

    Idempotent; raises InvalidColumnNameError on empty input.
    """
    if raw is None:
        raise InvalidColumnNameError("column name is None")
    name = raw.strip()
    if len(name) >= 2 and name[0] == name[-1] and name[0] in ("'", '"', "`"):
        name = name[1:-1].strip()
    name = _WHITESPACE_RE.sub("_", name)
    name = name.lower()
    if not name:
        raise InvalidColumnNameError(f"empty column name: {raw!r}")
    return name


def is_expression_name(name: str) -> bool:
    """True for expression-shaped names like count(*) that rarely survive aliasing."""
    return not _IDENTIFIER_RE.match(name)


@dataclass(frozen=True)
class Column:
    """A named, typed column descriptor. Name is stored normalized."""

    name: str
    type_tag: str = "text"

    def __post_init__(self) -> None:
        object.__setattr__(self, "name", normalize_column_name(self.name))
        if self.type_tag not in TYPE_TAGS:
            raise ValueError(f"unknown type tag: {self.type_tag!r}")


@dataclass(frozen=True)
class ResultTable:
    """Columns plus a multiset of rows; the unit every accuracy metric compares.

    Rows are order-insensitive unless a comparison explicitly opts into order.
    Duplicate column names are representable (generated SQL can produce them);
    comparison functions apply the keep-first rule to later duplicates.
    """

    columns: tuple[Column, ...]
    rows: tuple[tuple[Any, ...], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(
                    f"row {i} has {len(row)} cells, expected {width}"
                )

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @classmethod
    def build(
        cls,
        columns: Sequence[str | tuple[str, str] | Column],
        rows: Iterable[Sequence[Any]] = (),
    ) -> "ResultTable":
        """Construct from loose column specs: names, (name, tag) pairs, or Columns."""
        cols = []
        for spec in columns:
            if isinstance(spec, Column):
                cols.append(spec)
            elif isinstance(spec, tuple):
                cols.append(Column(spec[0], spec[1]))
            else:
                cols.append(Column(spec))
        return cls(tuple(cols), tuple(tuple(r) for r in rows))

    @classmethod
    def from_query_result(
        cls, column_names: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> "ResultTable":
        """Build from a cursor-style result, inferring type tags from values."""
        materialized = tuple(tuple(r) for r in rows)
        tags = []
        for idx, name in enumerate(column_names):
            tag = "null"
            for row in materialized:
                value = row[idx]
                if value is None:
                    continue
                tag = _infer_tag(value)
                break
            tags.append(tag)
        cols = tuple(Column(n, t) for n, t in zip(column_names, tags))
        return cls(cols, materialized)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "columns": [{"name": c.name, "type": c.type_tag} for c in self.columns],
            "rows": [list(row) for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=False)

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "ResultTable":
        cols = tuple(Column(c["name"], c["type"]) for c in data["columns"])
        rows = tuple(tuple(r) for r in data["rows"])
        return cls(cols, rows)

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        return cls.from_json_dict(json.loads(text))


def _infer_tag(value: Any) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "float"
    return "text"


def values_equal(a: Any, b: Any, tolerance: FloatTolerance = DEFAULT_TOLERANCE) -> bool:
    """Cell equality: null==null, tolerant numerics, trailing-trimmed text."""
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float))
    b_num = isinstance(b, (int, float))
    if a_num and b_num:
        return tolerance.equal(float(a), float(b))
    if isinstance(a, str) and isinstance(b, str):
        return a.rstrip() == b.rstrip()
    return False


def _sort_key(row: tuple[Any, ...]) -> tuple:
    # Total order across mixed cell types so multisets can be compared by
    # canonical sort followed by a tolerant pairwise scan.
    key = []
    for v in row:
        if v is None:
            key.append((0, ""))
        elif isinstance(v, (int, float)):
            key.append((1, float(v)))
        else:
            key.append((2, str(v).rstrip()))
    return tuple(key)


def rows_equal_multiset(
    left: Sequence[tuple[Any, ...]],
    right: Sequence[tuple[Any, ...]],
    tolerance: FloatTolerance = DEFAULT_TOLERANCE,
) -> bool:
    """Multiset equality of row collections under cell tolerance."""
    if len(left) != len(right):
        return False
    left_sorted = sorted(left, key=_sort_key)
    right_sorted = sorted(right, key=_sort_key)
    return _rows_pairwise_equal(left_sorted, right_sorted, tolerance)


def rows_equal_ordered(
    left: Sequence[tuple[Any, ...]],
    right: Sequence[tuple[Any, ...]],
    tolerance: FloatTolerance = DEFAULT_TOLERANCE,
) -> bool:
    """Positional equality of row collections under cell tolerance."""
    if len(left) != len(right):
        return False
    return _rows_pairwise_equal(left, right, tolerance)


def _rows_pairwise_equal(left, right, tolerance) -> bool:
    for lrow, rrow in zip(left, right):
        if len(lrow) != len(rrow):
            return False
        for a, b in zip(lrow, rrow):
            if not values_equal(a, b, tolerance):
                return False
    return True


def match_columns(
    truth: ResultTable, generated: ResultTable
) -> tuple[dict[int, int], list[int]]:
    """Pair truth columns with generated columns.

    Matching is by normalized name first.  Leftover columns are then paired
    positionally, but only where at least one side is an expression-shaped
    name (e.g. count(*)); two distinct plain identifiers never match.
    Duplicate generated names keep their first occurrence.

    Returns (truth index -> generated index, unmatched truth indices).
    """
    gen_first_index: dict[str, int] = {}
    for j, col in enumerate(generated.columns):
        gen_first_index.setdefault(col.name, j)
    if len(gen_first_index) < len(generated.columns):
        dupes = len(generated.columns) - len(gen_first_index)
        logger.warning(
            "generated output repeats %d column name(s); later duplicates "
            "are treated as superfluous",
            dupes,
        )

    mapping: dict[int, int] = {}
    used_gen: set[int] = set()
    unmatched_truth: list[int] = []
    for i, col in enumerate(truth.columns):
        j = gen_first_index.get(col.name)
        if j is not None and j not in used_gen:
            mapping[i] = j
            used_gen.add(j)
        else:
            unmatched_truth.append(i)

    remaining_gen = [j for j in range(len(generated.columns)) if j not in used_gen]
    still_unmatched: list[int] = []
    for i, j in zip(unmatched_truth, remaining_gen):
        t_name = truth.columns[i].name
        g_name = generated.columns[j].name
        if is_expression_name(t_name) or is_expression_name(g_name):
            mapping[i] = j
        else:
            still_unmatched.append(i)
    still_unmatched.extend(unmatched_truth[len(remaining_gen):])
    return mapping, sorted(still_unmatched)


def column_precision(truth: ResultTable, generated: ResultTable) -> float:
    """Fraction of generated columns that belong to the ground-truth column set.

    The denominator counts every generated column occurrence, so repeated
    names are penalized as superfluous; the numerator counts matched truth
    columns (by name, with the positional fallback for expression names).
    """
    if not generated.columns:
        raise UndefinedPrecisionError("generated table has no columns")
    mapping, _ = match_columns(truth, generated)
    return len(mapping) / len(generated.columns)


def containment_indicator(
    truth: ResultTable,
    generated: ResultTable,
    tolerance: FloatTolerance = DEFAULT_TOLERANCE,
    ordered: bool = False,
) -> int:
    """1 iff the truth table is recoverable from the generated output.

    Every truth column must be matched in the generated table, and the
    generated rows projected onto those columns must equal the truth rows as
    a multiset (or positionally when ordered=True).  Superfluous generated
    columns are tolerated.  Never raises: malformed comparisons yield 0.
    """
    try:
        mapping, unmatched = match_columns(truth, generated)
        if unmatched:
            return 0
        order = [mapping[i] for i in range(len(truth.columns))]
        projected = [tuple(row[j] for j in order) for row in generated.rows]
        if ordered:
            equal = rows_equal_ordered(list(truth.rows), projected, tolerance)
        else:
            equal = rows_equal_multiset(list(truth.rows), projected, tolerance)
        return 1 if equal else 0
    except Exception:
        return 0


def tables_equal_exact(
    x: ResultTable,
    y: ResultTable,
    tolerance: FloatTolerance = DEFAULT_TOLERANCE,
    ordered: bool = False,
) -> bool:
    """Strict equality: identical normalized column sets and equal row multisets."""
    if set(x.column_names) != set(y.column_names):
        return False
    if len(set(x.column_names)) != len(x.columns) or len(set(y.column_names)) != len(
        y.columns
    ):
        return False
    y_index = {name: j for j, name in enumerate(y.column_names)}
    order = [y_index[name] for name in x.column_names]
    projected = [tuple(row[j] for j in order) for row in y.rows]
    if ordered:
        return rows_equal_ordered(list(x.rows), projected, tolerance)
    return rows_equal_multiset(list(x.rows), projected, tolerance)
