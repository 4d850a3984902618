import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supergeo.errors import NonInvertibleError, ParityError
from supergeo.geometry import (
    CoordinateChange,
    OneForm,
    SuperPoint,
    TangentVector,
    compose_changes,
    evaluate_exprs,
    expand_coefficients,
    pushforward_tangent,
    random_values,
    reassemble,
)
from supergeo.grassmann import GrassmannNumber
from supergeo.superexpr import CoordinateSystem, free_variables, parse

CS = CoordinateSystem(("x1", "x2"), ("xi1", "xi2"))
MID = CoordinateSystem(("u1", "u2"), ("eta1", "eta2"))
TGT = CoordinateSystem(("y1", "y2"), ("zeta1", "zeta2"))

FIRST = CoordinateChange.parse(CS, MID, ["x1 + x2*xi1*xi2", "x2 + 0.5*x1^2", "xi1*(1 + x2)", "xi2 + x1*xi1"])
SECOND = CoordinateChange.parse(MID, TGT, ["exp(0.3*u1) + eta1*eta2", "u1*u2", "u2*eta1 + eta2", "eta2*(2 + u1)"])


def point_and_vector(seed, coords=CS, L=4):
    rng = np.random.default_rng(seed)
    X = random_values(rng, coords.eps, L, 1)[0]
    V = random_values(rng, coords.eps, L, 1)[0]
    p = SuperPoint.from_array(coords, X)
    return p, TangentVector(p, tuple(GrassmannNumber(L, row) for row in V))


def test_point_and_vector_parity_validation():
    L = 2
    even, odd = GrassmannNumber.scalar(1.0, L), GrassmannNumber.generator(1, L)
    with pytest.raises(ParityError):
        SuperPoint(CS, (even, even, even, odd))
    p = SuperPoint(CS, (even, even, odd, odd))
    with pytest.raises(ParityError):
        TangentVector(p, (even, even, even, odd))
    TangentVector(p, (odd, odd, even, even), odd=True)
    assert p["xi1"] == odd


def test_oneform_parity():
    OneForm.parse(CS, ["1", "x1", "xi2", "x2*xi1"]).require_even()
    with pytest.raises(ParityError):
        OneForm.parse(CS, ["xi1", "0", "0", "0"]).require_even()
    assert not OneForm.parse(CS, ["1", "1", "1", "0"]).is_even()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([
    "x1*xi1*xi2 + sin(x2) + xi2*x1",
    "exp(x1 + xi1*xi2)*xi2",
    "(1 + xi1)*(2 + xi2)*x1",
    "x2/(1 + x1^2 + xi1*xi2)",
]), st.integers(0, 10**6))
def test_expansion_reassembles(src, seed):
    e = parse(src, CS)
    coeffs = expand_coefficients(e, ["xi1", "xi2"], CS)
    for c in coeffs.values():
        assert not free_variables(c) & {"xi1", "xi2"}
    back = reassemble(coeffs, ["xi1", "xi2"])
    X = random_values(np.random.default_rng(seed), CS.eps, 4, 5)
    np.testing.assert_allclose(evaluate_exprs([e], CS.names, X), evaluate_exprs([back], CS.names, X), atol=1e-12)


def test_expansion_of_monomials():
    coeffs = expand_coefficients(parse("3*xi2*xi1 + x1", CS), ["xi1", "xi2"], CS)
    assert set(coeffs) == {(), (1, 2)}
    assert coeffs[()] is parse("x1", CS)
    X = random_values(np.random.default_rng(0), CS.eps, 4, 3)
    np.testing.assert_allclose(evaluate_exprs([coeffs[(1, 2)]], CS.names, X)[..., 0], -3.0)


@pytest.mark.parametrize("seed", range(5))
def test_pushforward_is_functorial(seed):
    _, v = point_and_vector(seed)
    composite = compose_changes(SECOND, FIRST)
    direct = pushforward_tangent(composite, v)
    stepwise = pushforward_tangent(SECOND, pushforward_tangent(FIRST, v))
    for a, b in zip(direct.base.values, stepwise.base.values):
        assert a.isclose(b, 1e-12)
    for a, b in zip(direct.components, stepwise.components):
        assert a.isclose(b, 1e-12)


def test_identity_change_and_singular_jacobian():
    _, v = point_and_vector(1)
    same = pushforward_tangent(CoordinateChange.identity(CS), v)
    assert same.components == v.components
    square = CoordinateChange.parse(CS, TGT, ["x1^2", "x2", "xi1", "xi2"])
    L = 2
    zero_body = SuperPoint(CS, (GrassmannNumber(L, {0b11: 1.0}), GrassmannNumber.scalar(1.0, L),
                                GrassmannNumber(L), GrassmannNumber(L)))
    with pytest.raises(NonInvertibleError):
        square.check_jacobian(zero_body)


def test_change_must_preserve_parity():
    with pytest.raises(ParityError):
        CoordinateChange.parse(CS, TGT, ["xi1", "x2", "x1", "xi2"])
