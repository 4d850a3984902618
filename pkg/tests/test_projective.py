import numpy as np
import pytest

from builders import COORDS_22, random_even_oneform
from supergeo.cli import make_init
from supergeo.connection import default_samples, difference_tensor, is_torsion_free, max_residual
from supergeo.errors import ParityError
from supergeo.geometry import OneForm
from supergeo.modelfile import bundled_path, load_model
from supergeo.projective import (
    projective_difference,
    recover_oneform,
    same_geodesics_check,
    shift_connection,
    solve_reparametrization,
)
from supergeo.superexpr import ZERO, CoordinateSystem, sub


def super_model():
    return load_model(bundled_path("super_metric_22"))


def init_of(model):
    return make_init(model, model.settings["x"], model.settings["v"], model.num_generators)


def test_shift_stays_torsion_free_and_difference_has_projective_shape():
    model = super_model()
    samples = default_samples(model.coords, 4, 30, seed=2)
    rng = np.random.default_rng(5)
    for _ in range(3):
        alpha = random_even_oneform(rng)
        shifted = shift_connection(model.gamma, alpha)
        assert is_torsion_free(shifted, samples)[0]
        S = difference_tensor(model.gamma, shifted)
        P = projective_difference(alpha)
        assert max_residual([sub(a, b) for a, b in zip(S.flat(), P.flat())], model.coords, samples) <= 1e-12
        back = recover_oneform(S, samples)
        assert max_residual([sub(a, b) for a, b in zip(back.components, alpha.components)], model.coords, samples) <= 1e-12


def test_difference_tensor_component_signs():
    # S^i_jk = -(alpha(d_j) delta^i_k + (-1)^{eps_j eps_k} alpha(d_k) delta^i_j)
    # with alpha(d_j) = (-1)^{eps_j} alpha_j
    alpha = OneForm.parse(COORDS_22, ["1", "2", "xi1", "xi2"])
    samples = default_samples(COORDS_22, 4, 5)
    vals = projective_difference(alpha).evaluate(samples)
    np.testing.assert_allclose(vals[:, 0, 0, 0, 0], -2.0)
    np.testing.assert_allclose(vals[:, 1, 0, 1, 0], -1.0)
    np.testing.assert_allclose(vals[:, 2, 0, 2, 0], -1.0)
    np.testing.assert_allclose(vals[:, 2, 2, 3], -samples[:, 3])
    np.testing.assert_allclose(vals[:, 0, 2, 0], samples[:, 2])


def test_non_even_oneform_is_rejected():
    with pytest.raises(ParityError):
        shift_connection(super_model().gamma, OneForm.parse(COORDS_22, ["xi1", "0", "0", "0"]))


def test_dense_and_augmented_reparametrizations_agree():
    model = super_model()
    init = init_of(model)
    dense = solve_reparametrization(model.gamma, model.oneform, init, 1.0, 1e-3, "dense")
    aug = solve_reparametrization(model.gamma, model.oneform, init, 1.0, 1e-3, "augmented")
    np.testing.assert_allclose(dense.r, aug.r, atol=1e-10)
    np.testing.assert_allclose(dense.s, aug.s, atol=1e-10)
    np.testing.assert_allclose(dense.states, aug.states, atol=1e-10)
    with pytest.raises(ValueError):
        solve_reparametrization(model.gamma, model.oneform, init, -1.0, 1e-3, "dense")


def test_shifted_model_is_equivalent_with_both_methods():
    model = super_model()
    shifted = shift_connection(model.gamma, model.oneform)
    for method in ("dense", "augmented"):
        report = same_geodesics_check(model.gamma, shifted, [init_of(model)], 1.0, 1e-3, 1e-6, method=method)
        assert report.equivalent, report.render()
        assert max(report.residuals) <= 1e-9
        assert report.verdict == "EQUIVALENT"


def test_model_against_itself_has_identity_reparametrization():
    model = super_model()
    init = init_of(model)
    report = same_geodesics_check(model.gamma, model.gamma, [init], 1.0, 1e-3)
    assert report.equivalent
    rep = solve_reparametrization(model.gamma, OneForm.zero(model.coords), init, 1.0, 1e-3)
    np.testing.assert_allclose(rep.r[:, 0], rep.times, atol=1e-14)
    assert not rep.r[:, 1:].any()


def test_torsion_and_non_projective_pairs_are_rejected():
    bad = load_model(bundled_path("torsion_22"))
    report = same_geodesics_check(bad.gamma, bad.gamma, [], 1.0)
    assert not report.equivalent and "torsion" in report.reason
    a = load_model(bundled_path("geodesic_pair_a"))
    b = load_model(bundled_path("geodesic_pair_b"))
    report = same_geodesics_check(a.gamma, b.gamma, [], 1.0)
    assert report.verdict.startswith("NOT-EQUIVALENT")
    assert report.render().rstrip().endswith(report.verdict)


def test_odd_only_domain_recovers_zero():
    # on a 0|1 domain every even 1-form gives S = 0, so alpha is not determined
    coords = CoordinateSystem((), ("xi",))
    S = projective_difference(OneForm.parse(coords, ["xi"]))
    assert max_residual(S.flat(), coords, default_samples(coords, 3, 10)) == 0.0
    assert recover_oneform(S).components == (ZERO,)
