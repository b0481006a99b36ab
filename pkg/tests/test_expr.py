import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kras.exceptions import EvalError, ParseError
from kras.expr import Num, differentiate, evaluate, parse, to_string

KERNEL_STRINGS = [
    "1 + sin(cos(10*t))",
    "1/(sin(1.2*t)^2+1.0)",
    "0.8*exp(sin(20*t)) - 0.3*exp(cos(20*t))",
    "ln(sin(20*t)+2)",
    "-t^3 + 2*t - 7",
    "exp(-t)*cos(18*t)/(t^2 + 1)",
    "2^3*t",
    "-(t - 1)^2",
]


def test_parse_nested_functions():
    assert repr(parse("1 + sin(cos(10*t))")) == "Add(Num(1.0), Sin(Cos(Mul(Num(10.0), t))))"


def test_parse_literal_zero():
    assert parse("0") == Num(0.0)


def test_parse_quotient():
    assert repr(parse("1/(sin(1.2*t)^2+1.0)")) == "Div(Num(1.0), Add(Pow(Sin(Mul(Num(1.2), t)), 2), Num(1.0)))"


def test_precedence_power_over_unary_minus():
    assert evaluate(parse("-t^2"), 3.0) == -9.0
    assert evaluate(parse("2-3-4"), 0.0) == -5.0
    assert evaluate(parse("12/3/2"), 0.0) == 2.0


@pytest.mark.parametrize("text", ["", "1 +", "sin(t", "foo(t)", "t^1.5", "1 + * 2", "x"])
def test_parse_errors_carry_offset(text):
    with pytest.raises(ParseError) as err:
        parse(text)
    assert err.value.offset >= 0


def test_parse_error_reports_expected_tokens():
    with pytest.raises(ParseError) as err:
        parse("1 + * 2")
    assert err.value.offset == 4
    assert "number" in err.value.expected


@pytest.mark.parametrize("text, expected", [
    ("t^3", "3.0 * t^2"),
    ("sin(cos(10*t))", None),
    ("ln(sin(20*t)+2)", None),
])
def test_derivative_examples(text, expected):
    d = differentiate(parse(text))
    if expected is not None:
        assert to_string(d) == expected
    tau = np.linspace(-1, 0, 7)
    if text.startswith("sin"):
        ref = -10 * np.sin(10 * tau) * np.cos(np.cos(10 * tau))
    elif text.startswith("ln"):
        ref = 20 * np.cos(20 * tau) / (np.sin(20 * tau) + 2)
    else:
        ref = 3 * tau**2
    np.testing.assert_allclose(evaluate(d, tau), ref, rtol=1e-14, atol=1e-14)


def test_evaluate_examples():
    assert evaluate(parse("t^2"), -1.0) == 1.0
    assert evaluate(parse("1/(sin(1.2*t)^2+1)"), 0.0) == 1.0


def test_evaluate_against_high_precision(rng):
    e = parse("exp(sin(20*t))")
    mpmath.mp.dps = 40
    for tau in rng.uniform(-1, 0, 20):
        ref = float(mpmath.exp(mpmath.sin(20 * mpmath.mpf(float(tau)))))
        assert abs(evaluate(e, float(tau)) - ref) <= 1e-14 * abs(ref)
    assert math.isclose(evaluate(e, -0.3), float(mpmath.exp(mpmath.sin(-6))), rel_tol=1e-14)


def test_evaluate_errors():
    with pytest.raises(EvalError):
        evaluate(parse("1/t"), 0.0)
    with pytest.raises(EvalError):
        evaluate(parse("ln(t)"), np.array([-1.0, 1.0]))


def test_evaluation_is_deterministic():
    e = parse(KERNEL_STRINGS[2])
    tau = np.linspace(-1, 0, 101)
    assert np.array_equal(evaluate(e, tau), evaluate(e, tau.copy()))


@pytest.mark.parametrize("text", KERNEL_STRINGS)
def test_round_trip(text, rng):
    e = parse(text)
    again = parse(to_string(e))
    tau = rng.uniform(-1.7, -0.01, 100)
    a, b = evaluate(e, tau), evaluate(again, tau)
    np.testing.assert_allclose(b, a, rtol=1e-14, atol=0)


@pytest.mark.parametrize("text", KERNEL_STRINGS)
def test_derivative_matches_central_differences(text, rng):
    e = parse(text)
    d = differentiate(e)
    tau = rng.uniform(-1.6, -0.1, 50)
    h = 1e-6
    fd = (evaluate(e, tau + h) - evaluate(e, tau - h)) / (2 * h)
    exact = evaluate(d, tau)
    np.testing.assert_allclose(exact, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(exact).max()))



def _extend(inner):
    return st.one_of(
        st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), inner).map(lambda p: f"{p[0]}({p[1]})"),
        st.tuples(inner, st.integers(0, 3)).map(lambda p: f"({p[0]})^{p[1]}"),
    )


EXPRESSIONS = st.recursive(st.one_of(st.just("t"), st.floats(0.1, 5.0).map(lambda v: f"{v:.3f}")),
                           _extend, max_leaves=6)


@settings(max_examples=150, deadline=None)
@given(EXPRESSIONS)
def test_generated_expressions_round_trip_and_differentiate(text):
    e = parse(text)
    tau = np.linspace(-0.9, -0.1, 9)
    a = evaluate(e, tau)
    if np.abs(a).max() > 1e6:
        return
    np.testing.assert_allclose(evaluate(parse(to_string(e)), tau), a, rtol=1e-12, atol=1e-12)
    d = evaluate(differentiate(e), tau)
    h = 1e-6
    fd = (evaluate(e, tau + h) - evaluate(e, tau - h)) / (2 * h)
    np.testing.assert_allclose(d, fd, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(d).max()))
