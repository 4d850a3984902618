import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supergeo.compile import compiled
from supergeo.errors import EvaluationError, ParityError, ParseError
from supergeo.geometry import random_values
from supergeo.grassmann import GrassmannNumber, Parity
from supergeo.superexpr import (
    ZERO,
    CoordinateSystem,
    add,
    conjugate_expr,
    const,
    differentiate,
    div,
    evaluate,
    free_variables,
    func,
    mul,
    neg,
    parse,
    power,
    sub,
    substitute,
    to_source,
    var,
)

CS = CoordinateSystem(("x1", "x2"), ("xi1", "xi2"))
X1, X2, XI1, XI2 = CS.vars()


def _leaf():
    return st.one_of(
        st.floats(-2.0, 2.0, allow_nan=False).map(lambda v: const(round(v, 3))),
        st.sampled_from([X1, X2, XI1, XI2]),
    )


def _combine(children):
    def build(op, a, b):
        if op == "add":
            return add(a, b)
        if op == "sub":
            return sub(a, b)
        if op == "mul":
            return mul(a, b)
        if op == "neg":
            return neg(a)
        if op == "div" and b.parity is Parity.EVEN:
            return div(a, add(const(2.0), mul(b, b)))
        if op in ("sin", "cos", "exp") and a.parity is Parity.EVEN:
            return func(op, mul(const(0.5), a))
        if op == "pow" and a.parity is Parity.EVEN:
            return power(a, 2)
        return mul(a, b)

    ops = st.sampled_from(["add", "sub", "mul", "mul", "neg", "div", "sin", "cos", "exp", "pow"])
    return st.builds(build, ops, children, children)


exprs = st.recursive(_leaf(), _combine, max_leaves=12)


def homogeneous(parity):
    return exprs.filter(lambda e: e.parity is parity)


def random_point(seed, L=4):
    rng = np.random.default_rng(seed)
    arr = random_values(rng, CS.eps, L, 1, body_range=(-1.0, 1.0))[0]
    return {name: GrassmannNumber(L, row) for name, row in zip(CS.names, arr)}


def test_hash_consing_makes_equal_expressions_identical():
    assert parse("x1*xi1 + 2", CS) is parse("x1 * xi1 + 2", CS)
    assert add(X1, XI1) is add(X1, XI1)
    assert sub(X1, X1) is ZERO


def test_parity_rules_at_construction():
    assert parse("xi1*xi2", CS).parity is Parity.EVEN
    assert parse("x1*xi2", CS).parity is Parity.ODD
    assert parse("x1 + xi1", CS).parity is Parity.INHOMOGENEOUS
    assert mul(XI1, XI1) is ZERO
    assert power(XI1, 2) is ZERO
    with pytest.raises(ParityError):
        parse("sin(xi1)", CS)
    with pytest.raises(ParityError):
        parse("x1/xi1", CS)


def test_parse_errors_carry_positions():
    with pytest.raises(ParseError) as info:
        parse("x1 + * x2", CS)
    assert info.value.position == 5
    with pytest.raises(ParseError):
        parse("x3", CS)
    with pytest.raises(ParseError):
        parse("(x1", CS)


@settings(max_examples=80, deadline=None)
@given(exprs)
def test_source_round_trip(e):
    assert parse(to_source(e), CS) is e


@settings(max_examples=50, deadline=None)
@given(exprs, st.integers(0, 10**6))
def test_even_derivative_matches_central_differences(e, seed):
    point = random_point(seed)
    h = 1e-5
    for name in ("x1", "x2"):
        d = evaluate(differentiate(e, name, CS), point)
        up = dict(point, **{name: point[name] + h})
        down = dict(point, **{name: point[name] - h})
        fd = (evaluate(e, up) - evaluate(e, down)) * (1.0 / (2 * h))
        assert np.allclose(d.array, fd.array, atol=1e-5 * max(1.0, d.norm_max()))


@settings(max_examples=50, deadline=None)
@given(exprs, st.integers(0, 10**6))
def test_odd_derivative_is_left_coefficient(e, seed):
    # f(xi + tau) = f(xi) + tau * d_xi f for an odd generator tau used nowhere else
    L = 5
    base = random_point(seed, L - 1)
    point = {k: v.with_generators(L) for k, v in base.items()}
    tau = GrassmannNumber.generator(L, L)
    top = 1 << (L - 1)
    for name in ("xi1", "xi2"):
        shifted = dict(point, **{name: point[name] + tau})
        diff = (evaluate(e, shifted) - evaluate(e, point)).array
        d = evaluate(differentiate(e, name, CS), point).array
        for mask in range(top):
            sign = -1.0 if bin(mask).count("1") % 2 else 1.0
            assert abs(d[mask] - sign * diff[mask | top]) <= 1e-9 * max(1.0, abs(d[mask]))


@settings(max_examples=40, deadline=None)
@given(homogeneous(Parity.ODD) | homogeneous(Parity.EVEN), exprs, st.integers(0, 10**6))
def test_graded_leibniz_rule(a, b, seed):
    point = random_point(seed)
    sign = -1.0 if a.parity is Parity.ODD else 1.0
    for name in CS.names:
        lhs = evaluate(differentiate(mul(a, b), name, CS), point)
        da = evaluate(differentiate(a, name, CS), point)
        db = evaluate(differentiate(b, name, CS), point)
        odd_coord = CS.parity_of(name)
        rhs = da * evaluate(b, point) + (sign if odd_coord else 1.0) * (evaluate(a, point) * db)
        assert lhs.isclose(rhs, 1e-9)


@settings(max_examples=40, deadline=None)
@given(exprs, st.integers(0, 10**6))
def test_mixed_derivatives_graded_commute(e, seed):
    point = random_point(seed)
    for i in CS.names:
        for j in CS.names:
            sign = -1.0 if CS.parity_of(i) and CS.parity_of(j) else 1.0
            dij = evaluate(differentiate(differentiate(e, j, CS), i, CS), point)
            dji = evaluate(differentiate(differentiate(e, i, CS), j, CS), point)
            assert dij.isclose(sign * dji, 1e-9 * max(1.0, dij.norm_max()))


@settings(max_examples=40, deadline=None)
@given(exprs, st.integers(0, 10**6))
def test_conjugation_commutes_with_evaluation(e, seed):
    point = random_point(seed)
    assert evaluate(conjugate_expr(e), point).isclose(evaluate(e, point).conjugate(), 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(exprs, min_size=1, max_size=4), st.integers(0, 10**6))
def test_compiled_program_matches_interpreter(es, seed):
    rng = np.random.default_rng(seed)
    X = random_values(rng, CS.eps, 4, 3, body_range=(-1.0, 1.0))
    out = compiled(es, list(CS.names))(X)
    for b in range(3):
        point = {name: GrassmannNumber(4, row) for name, row in zip(CS.names, X[b])}
        for k, e in enumerate(es):
            np.testing.assert_allclose(out[b, k], evaluate(e, point).array, atol=1e-10)


def test_substitute_and_free_variables():
    e = parse("x1^2 + xi1*xi2", CS)
    assert free_variables(e) == {"x1", "xi1", "xi2"}
    swapped = substitute(e, {"xi1": XI2, "xi2": XI1})
    assert swapped is parse("x1^2 + xi2*xi1", CS)
    point = random_point(3)
    assert evaluate(swapped, point).isclose(evaluate(parse("x1^2 - xi1*xi2", CS), point))


def test_transcendental_functions_of_even_elements():
    point = random_point(4)
    x = point["x1"]
    got = evaluate(parse("exp(x1 + xi1*xi2)", CS), point)
    n = point["xi1"] * point["xi2"]
    expected = x.apply_smooth([math.exp] * 5) * (1.0 + n)
    assert got.isclose(expected, 1e-12)


def test_evaluation_domain_errors():
    L = 2
    point = {"x1": GrassmannNumber(L, {0: 0.0, 0b11: 1.0}), "x2": GrassmannNumber.scalar(-1.0, L),
             "xi1": GrassmannNumber(L), "xi2": GrassmannNumber(L)}
    with pytest.raises(EvaluationError):
        evaluate(parse("1/x1", CS), point)
    with pytest.raises(EvaluationError):
        evaluate(parse("log(x2)", CS), point)
