import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouq.expression import DomainError, ParseError, evaluate, parse_expression, to_text, variables


def ev(text, *row, **kw):
    return float(evaluate(parse_expression(text, **kw), np.array([row], dtype=float))[0])


@pytest.mark.parametrize(
    "text, row, expected",
    [
        ("1 + 2 * 3", (), 7.0),
        ("(1 + 2) * 3", (), 9.0),
        ("2 ^ 3 ^ 2", (), 512.0),
        ("-2 ^ 2", (), -4.0),
        ("2 ^ -1", (), 0.5),
        ("x1 - x2 - x3", (1.0, 2.0, 3.0), -4.0),
        ("x1 / x2 / 2", (8.0, 2.0), 2.0),
        ("max(x1, 3) + min(x1, 3)", (5.0,), 8.0),
        ("pos(x1 - 1) + pos(1 - x1)", (0.25,), 0.75),
        ("abs(-x1) * cos(pi)", (2.0,), -2.0),
        ("tanh(0) + exp(0) + log(1) + sin(0)", (), 1.0),
    ],
)
def test_evaluation(text, row, expected):
    assert ev(text, *row) == pytest.approx(expected)


def test_vectorized_over_rows():
    node = parse_expression("x1 * x2", dim=2)
    x = np.arange(12.0).reshape(6, 2)
    assert evaluate(node, x).tolist() == (x[:, 0] * x[:, 1]).tolist()


def test_named_axes():
    assert ev("h * 2 + v", 1.5, 0.0, 4.0, names={"h": 0, "v": 2}) == 7.0


def test_variables():
    assert variables(parse_expression("x1 * x3 + 2")) == frozenset({0, 2})


@pytest.mark.parametrize(
    "text, offset",
    [("x1 +", 4), ("foo(1)", 0), ("x3", 0), ("1e400", 0), ("cos(1, 2)", 0), ("", 0), ("(1 + 2", 6), ("1 2", 2)],
)
def test_parse_errors_carry_offset(text, offset):
    with pytest.raises(ParseError) as err:
        parse_expression(text, dim=2)
    assert err.value.offset == offset


def test_non_ascii_rejected():
    with pytest.raises(ParseError):
        parse_expression("x1 + é")


def test_domain_error_names_point():
    with pytest.raises(DomainError) as err:
        evaluate(parse_expression("log(x1)"), np.array([[1.0], [0.0]]))
    assert err.value.point == (0.0,)


def _exprs():
    leaf = st.one_of(
        st.floats(-9, 9, allow_nan=False).map(lambda v: repr(float(v))),
        st.sampled_from(["x1", "x2", "pi"]),
    )
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            inner.map(lambda e: f"-{e}"),
            inner.map(lambda e: f"tanh({e})"),
            st.tuples(inner, inner).map(lambda t: f"max({t[0]}, {t[1]})"),
        ),
        max_leaves=12,
    )


@given(_exprs(), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=150, deadline=None)
def test_print_parse_round_trip(text, a, b):
    node = parse_expression(text, dim=2)
    again = parse_expression(to_text(node), dim=2)
    assert again == node
    x = np.array([[a, b]])
    v1, v2 = evaluate(node, x), evaluate(again, x)
    assert v1.tolist() == v2.tolist()


def test_pi_constant():
    assert ev("pi") == math.pi
