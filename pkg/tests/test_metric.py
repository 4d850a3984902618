import numpy as np
import pytest

from builders import COORDS_22, random_super_metric
from supergeo.connection import ChristoffelField, default_samples, difference_tensor, max_residual
from supergeo.errors import NonInvertibleError, ParityError
from supergeo.geometry import SuperPoint, TangentVector, random_values
from supergeo.grassmann import GrassmannNumber
from supergeo.metric import (
    SuperMetric,
    compatibility_check,
    cotangent_samples,
    energy_expr,
    hamiltonian_eval,
    hamiltonian_expr,
    hamiltonian_field_from_function,
    hamiltonian_vector_field,
    intertwine_check,
    levi_civita,
    metric_eval,
    metric_flat,
    metric_sharp,
)
from supergeo.compile import compiled
from supergeo.flows import tangent_names
from supergeo.modelfile import bundled_models, bundled_path, load_model
from supergeo.superexpr import CoordinateSystem

L = 4


def super_metric():
    return load_model(bundled_path("super_metric_22")).metric


def random_vectors(seed, coords=COORDS_22, count=2):
    rng = np.random.default_rng(seed)
    X = random_values(rng, coords.eps, L, 1)[0]
    base = SuperPoint.from_array(coords, X)
    out = []
    for _ in range(count):
        V = random_values(rng, coords.eps, L, 1, body_range=(-1.0, 1.0))[0]
        out.append(TangentVector(base, tuple(GrassmannNumber(L, r) for r in V)))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_structural_identities_of_random_metrics(seed):
    g = random_super_metric(np.random.default_rng(seed))
    res = g.invariant_residuals(default_samples(COORDS_22, L, 20, seed=seed))
    assert res["min_body_det"] > 0.1
    for key in ("graded_symmetry", "inverse_right", "inverse_left", "inverse_symmetry", "inverse_parity"):
        assert res[key] <= 1e-12, (key, res[key])


def test_surface_levi_civita_closed_form():
    model = load_model(bundled_path("surface"))
    expected = ChristoffelField.from_entries(model.coords, {(1, 2, 2): "-x1", (2, 1, 2): "1/x1", (2, 2, 1): "1/x1"})
    S = difference_tensor(levi_civita(model.metric), expected)
    assert max_residual(S.flat(), model.coords, default_samples(model.coords, 2, 20)) <= 1e-13


@pytest.mark.parametrize("seed", range(4))
def test_flat_and_sharp_are_inverse(seed):
    g = super_metric()
    v, _ = random_vectors(seed)
    back = metric_sharp(g, v.base, metric_flat(g, v))
    for a, b in zip(back.components, v.components):
        assert a.isclose(b, 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_pairing_is_graded_symmetric_and_matches_flat(seed):
    # even vectors pair symmetrically, and <v, w> = sum_i (-1)^{eps_i} v^i (g_flat w)_i
    g = super_metric()
    v, w = random_vectors(seed)
    assert metric_eval(g, v, w).isclose(metric_eval(g, w, v), 1e-12)
    flat = metric_flat(g, w)
    eps = COORDS_22.eps
    total = GrassmannNumber(L)
    for i in range(4):
        term = v.components[i] * flat[i]
        total = total - term if eps[i] else total + term
    assert total.isclose(metric_eval(g, v, w), 1e-12)


def test_hamiltonian_is_energy_of_the_raised_momentum():
    g = super_metric()
    v, _ = random_vectors(11)
    p = metric_flat(g, v)
    H = hamiltonian_eval(g, v.base, p)
    X = np.concatenate([v.base.array(), v.array()])[None]
    E = compiled([energy_expr(g)], list(COORDS_22.names) + list(tangent_names(COORDS_22)))(X)[0, 0]
    assert H.isclose(GrassmannNumber(L, E), 1e-12)
    with pytest.raises(ParityError):
        hamiltonian_eval(g, v.base, [GrassmannNumber.generator(1, L)] + p[1:])


def test_hamiltonian_field_matches_symplectic_gradient():
    g = super_metric()
    direct = hamiltonian_vector_field(g)
    general = hamiltonian_field_from_function(hamiltonian_expr(g), COORDS_22)
    assert direct.names == general.names
    Z = cotangent_samples(COORDS_22, L, 30, seed=3)
    np.testing.assert_allclose(direct(Z), general(Z), atol=1e-12)


def test_levi_civita_of_random_metric_is_compatible():
    g = random_super_metric(np.random.default_rng(42))
    assert compatibility_check(g, levi_civita(g), default_samples(COORDS_22, L, 20)) <= 1e-12


def test_singular_and_malformed_metrics_are_rejected():
    line = CoordinateSystem(("x",), ())
    with pytest.raises(NonInvertibleError):
        SuperMetric.from_upper(line, {(1, 1): "0*x"}).inverse
    odd_only = CoordinateSystem((), ("a", "b"))
    with pytest.raises(NonInvertibleError):
        # the odd-odd block must be a nondegenerate antisymmetric form
        SuperMetric.from_upper(odd_only, {(1, 2): "a*b"}).inverse
    with pytest.raises(ValueError):
        SuperMetric.from_upper(COORDS_22, {(2, 1): "1"})
    with pytest.raises(IndexError):
        SuperMetric.from_upper(COORDS_22, {(1, 5): "1"})
    with pytest.raises(ParityError):
        SuperMetric.from_upper(COORDS_22, {(1, 3): "x1"})
    with pytest.raises(ParityError):
        SuperMetric.from_upper(COORDS_22, {(1, 1): "xi1"})


def test_odd_block_is_antisymmetric():
    g = SuperMetric.from_upper(COORDS_22, {(1, 1): "1", (2, 2): "1", (3, 4): "2"})
    X = default_samples(COORDS_22, L, 2)
    vals = compiled([g[2, 3], g[3, 2], g[2, 2]], COORDS_22.names)(X)
    np.testing.assert_allclose(vals[:, 0, 0], 2.0)
    np.testing.assert_allclose(vals[:, 1, 0], -2.0)
    assert not vals[:, 2].any()


@pytest.mark.parametrize("seed", range(4))
def test_kinetic_energy_vanishes_on_odd_vectors(seed):
    # g_sharp maps odd covectors onto odd vectors, whose self-pairing is zero by graded symmetry
    g = super_metric()
    rng = np.random.default_rng(seed)
    flipped = [1 - e for e in COORDS_22.eps]
    base = SuperPoint.from_array(COORDS_22, random_values(rng, COORDS_22.eps, L, 1)[0])
    W = random_values(rng, flipped, L, 1, body_range=(-1.0, 1.0))[0]
    w = TangentVector(base, tuple(GrassmannNumber(L, r) for r in W), odd=True)
    assert metric_eval(g, w, w).norm_max() <= 1e-12
    v, _ = random_vectors(seed)
    assert metric_eval(g, v, v).norm_max() > 1e-3


@pytest.mark.parametrize("name", [n for n in bundled_models() if load_model(bundled_path(n)).metric is not None])
def test_levi_civita_intertwines_on_bundled_metric_models(name):
    g = load_model(bundled_path(name)).metric
    assert intertwine_check(g, cotangent_samples(g.coords, size=50, seed=1)) <= 1e-10
