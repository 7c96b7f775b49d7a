from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from bigsqlbench.resultset import (
    Column,
    FloatTolerance,
    InvalidColumnNameError,
    ResultTable,
    UndefinedPrecisionError,
    column_precision,
    containment_indicator,
    is_expression_name,
    match_columns,
    normalize_column_name,
    tables_equal_exact,
    values_equal,
)


def table(cols, rows=()):
    return ResultTable.build(cols, rows)


# --- normalize_column_name ---


def test_normalize_case_folds():
    assert normalize_column_name("L_ExtendedPrice") == "l_extendedprice"


def test_normalize_strips_quotes_and_collapses_spaces():
    assert normalize_column_name("`order key`") == "order_key"
    assert normalize_column_name('"Total   Price"') == "total_price"


def test_normalize_idempotent():
    once = normalize_column_name("l_extendedprice")
    assert normalize_column_name(once) == once


def test_normalize_rejects_empty():
    with pytest.raises(InvalidColumnNameError):
        normalize_column_name("")
    with pytest.raises(InvalidColumnNameError):
        normalize_column_name("   ")


def test_expression_names():
    assert is_expression_name("count(*)")
    assert is_expression_name("sum(x+y)")
    assert not is_expression_name("order_key")


# --- cell comparison ---


def test_values_equal_null_semantics():
    assert values_equal(None, None)
    assert not values_equal(None, 0)
    assert not values_equal("", None)


def test_values_equal_float_tolerance():
    assert values_equal(1.0, 1.0 + 1e-9)
    assert values_equal(1e6, 1e6 * (1 + 1e-7))
    assert not values_equal(1.0, 1.1)


def test_values_equal_text_trailing_trim():
    assert values_equal("abc  ", "abc")
    assert not values_equal("  abc", "abc")


def test_values_equal_cross_type():
    assert values_equal(1, 1.0)
    assert not values_equal("1", 1)


def test_tolerance_absolute_floor():
    tol = FloatTolerance(relative=1e-6, absolute=1e-9)
    assert tol.equal(0.0, 5e-10)
    assert not tol.equal(0.0, 1e-6)


# --- column_precision ---


def test_precision_identity():
    t = table(["a", "b"], [(1, 2)])
    assert column_precision(t, t) == 1.0


def test_precision_one_extra_column():
    truth = table(["a", "b"])
    gen = table(["a", "b", "c"])
    assert column_precision(truth, gen) == pytest.approx(2 / 3)


def test_precision_disjoint_plain_names_is_zero():
    truth = table(["a", "b"])
    gen = table(["c", "d"])
    assert column_precision(truth, gen) == 0.0


def test_precision_zero_columns_errors():
    truth = table(["a"])
    gen = ResultTable(columns=(), rows=())
    with pytest.raises(UndefinedPrecisionError):
        column_precision(truth, gen)


def test_precision_subset_of_truth_is_one():
    truth = table(["a", "b", "c"])
    gen = table(["a", "c"])
    assert column_precision(truth, gen) == 1.0


def test_precision_duplicate_generated_names_counted_superfluous():
    truth = table(["a", "b"])
    gen = ResultTable(columns=(Column("a"), Column("a"), Column("b")), rows=())
    assert column_precision(truth, gen) == pytest.approx(2 / 3)


def test_precision_expression_fallback_matches_alias():
    truth = table(["count(*)"])
    gen = table(["n"])
    assert column_precision(truth, gen) == 1.0


# --- containment_indicator ---


def test_containment_superfluous_column_still_valid():
    truth = table(["a", "b"], [(1, "x"), (2, "y")])
    gen = table(["a", "b", "c"], [(1, "x", 9), (2, "y", 8)])
    assert containment_indicator(truth, gen) == 1


def test_containment_row_count_mismatch_invalid():
    truth = table(["a", "b"], [(1, "x"), (2, "y")])
    gen = table(["a", "b"], [(1, "x"), (2, "y"), (3, "z")])
    assert containment_indicator(truth, gen) == 0


def test_containment_missing_column_invalid():
    truth = table(["a", "b"], [(1, "x")])
    gen = table(["a"], [(1,)])
    assert containment_indicator(truth, gen) == 0


def test_containment_empty_tables_column_superset():
    truth = table(["a"])
    gen = table(["a", "b"])
    assert containment_indicator(truth, gen) == 1


def test_containment_row_values_must_match():
    truth = table(["a"], [(1,), (2,)])
    gen = table(["a"], [(1,), (3,)])
    assert containment_indicator(truth, gen) == 0


def test_containment_invariant_under_row_reorder():
    truth = table(["a", "b"], [(1, "x"), (2, "y"), (3, "z")])
    gen = table(["a", "b"], [(3, "z"), (1, "x"), (2, "y")])
    assert containment_indicator(truth, gen) == 1


def test_containment_invariant_under_generated_column_reorder():
    truth = table(["a", "b"], [(1, "x")])
    gen = table(["b", "a"], [("x", 1)])
    assert containment_indicator(truth, gen) == 1


def test_containment_ordered_flag_enforces_order():
    truth = table(["a"], [(1,), (2,)])
    gen_swapped = table(["a"], [(2,), (1,)])
    assert containment_indicator(truth, gen_swapped, ordered=True) == 0
    assert containment_indicator(truth, gen_swapped, ordered=False) == 1


def test_containment_expression_fallback_end_to_end():
    truth = table([("count(*)", "integer")], [(5,)])
    gen = table([("n", "integer")], [(5,)])
    assert containment_indicator(truth, gen) == 1


def test_containment_plain_identifier_mismatch_no_fallback():
    truth = table(["a"], [(1,)])
    gen = table(["z"], [(1,)])
    assert containment_indicator(truth, gen) == 0


def test_containment_duplicate_generated_keeps_first():
    truth = table(["a"], [(1,)])
    gen = ResultTable(
        columns=(Column("a", "integer"), Column("a", "integer")),
        rows=((1, 999),),
    )
    assert containment_indicator(truth, gen) == 1


# --- tables_equal_exact ---


def test_exact_identity():
    t = table(["a", "b"], [(1, "x"), (2, "y")])
    assert tables_equal_exact(t, t)


def test_exact_permuted_rows_equal():
    x = table(["a"], [(1,), (2,), (3,)])
    y = table(["a"], [(3,), (1,), (2,)])
    assert tables_equal_exact(x, y)


def test_exact_extra_column_unequal():
    x = table(["a"], [(1,)])
    y = table(["a", "b"], [(1, 2)])
    assert not tables_equal_exact(x, y)


def test_exact_column_order_insensitive():
    x = table(["a", "b"], [(1, "x")])
    y = table(["b", "a"], [("x", 1)])
    assert tables_equal_exact(x, y)


def test_exact_implied_by_containment_with_same_columns():
    truth = table(["a", "b"], [(1, "x"), (2, "y")])
    gen = table(["b", "a"], [("y", 2), ("x", 1)])
    assert containment_indicator(truth, gen) == 1
    assert tables_equal_exact(truth, gen)


# --- structure ---


def test_row_width_enforced():
    with pytest.raises(ValueError):
        ResultTable.build(["a", "b"], [(1,)])


def test_json_round_trip():
    t = table([("a", "integer"), ("b", "text")], [(1, "x"), (None, "y ")])
    assert ResultTable.from_json(t.to_json()) == t


def test_from_query_result_infers_tags():
    t = ResultTable.from_query_result(["n", "v", "s"], [(1, 2.5, "x")])
    assert [c.type_tag for c in t.columns] == ["integer", "float", "text"]


def test_match_columns_positional_only_for_expressions():
    truth = table(["count(*)", "b"])
    gen = table(["b", "cnt"])
    mapping, unmatched = match_columns(truth, gen)
    assert mapping == {1: 0, 0: 1}
    assert unmatched == []


# --- property tests ---

_names = st.lists(
    st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True),
    min_size=1,
    max_size=4,
    unique=True,
)


@st.composite
def tables_strategy(draw):
    names = draw(_names)
    tags = [draw(st.sampled_from(["integer", "float", "text"])) for _ in names]
    n_rows = draw(st.integers(min_value=0, max_value=5))
    value_strategies = {
        "integer": st.integers(min_value=-100, max_value=100),
        "float": st.floats(
            min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False
        ),
        "text": st.text(alphabet="abcxyz", max_size=4),
    }
    rows = [
        tuple(draw(value_strategies[tag]) for tag in tags) for _ in range(n_rows)
    ]
    return ResultTable.build(list(zip(names, tags)), rows)


@given(tables_strategy())
def test_prop_self_containment(t):
    assert containment_indicator(t, t) == 1


@given(tables_strategy(), st.randoms(use_true_random=False))
def test_prop_row_and_column_reorder_invariance(t, rng):
    rows = list(t.rows)
    rng.shuffle(rows)
    col_order = list(range(len(t.columns)))
    rng.shuffle(col_order)
    shuffled = ResultTable(
        columns=tuple(t.columns[j] for j in col_order),
        rows=tuple(tuple(row[j] for j in col_order) for row in rows),
    )
    assert containment_indicator(t, shuffled) == 1
    assert tables_equal_exact(t, shuffled)


@given(tables_strategy())
def test_prop_fresh_column_strictly_decreases_precision(t):
    assert column_precision(t, t) == 1.0
    widened = ResultTable(
        columns=t.columns + (Column("zz_fresh_col", "integer"),),
        rows=tuple(row + (0,) for row in t.rows),
    )
    assert column_precision(t, widened) < 1.0
    assert containment_indicator(t, widened) == 1


@given(tables_strategy())
def test_prop_restoring_missing_column_never_decreases_precision(t):
    if len(t.columns) < 2:
        return
    narrowed = ResultTable(
        columns=t.columns[:-1], rows=tuple(row[:-1] for row in t.rows)
    )
    before = column_precision(t, narrowed)
    assert column_precision(t, t) >= before


@given(tables_strategy())
def test_prop_containment_with_exact_columns_implies_equality(t):
    if containment_indicator(t, t) == 1:
        assert tables_equal_exact(t, t)
