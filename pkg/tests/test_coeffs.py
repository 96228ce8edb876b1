import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcdiff.coeffs import (CoefficientError, CoefficientField, CounterexampleError, ScalarField, as_points,
                           build_counterexample_g, constant_vector, generator_apply, identity_diffusion,
                           make_radial_field, probe_regularity, time_change_coeffs, zero_drift)


def bm(d):
    return CoefficientField(d, zero_drift(d), identity_diffusion(d), name=f"bm{d}")


def test_as_points_shapes():
    assert as_points(2.0, 1).shape == (1, 1)
    assert as_points([1.0, 2.0, 3.0], 3).shape == (1, 3)
    assert as_points([1.0, 2.0, 3.0], 1).shape == (3, 1)
    with pytest.raises(ValueError):
        as_points([1.0, 2.0], 3)


def test_scalar_field_call_and_reciprocal():
    g = ScalarField.of_norm(lambda r: 2 + r ** 4, 3)
    assert g([1.0, 0.0, 0.0]) == 3.0
    assert g.reciprocal()([0.0, 2.0, 0.0]) == pytest.approx(1 / 18)
    assert ScalarField.constant(4.0, 2)([[1, 1], [2, 2]]).tolist() == [4.0, 4.0]


def test_regularity_constant_coefficients():
    fld = CoefficientField(1, zero_drift(1), identity_diffusion(1))
    rep = probe_regularity(fld, [1.0, 2.0], 4)
    assert rep.ok and rep.a_bounded_away_from_zero
    for sh in rep.shells:
        assert sh.sup_a == 1.0 and sh.sup_b == 0.0 and sh.min_eig_a == 1.0


def test_regularity_vanishing_diffusion_at_origin():
    fld = CoefficientField(2, zero_drift(2), identity_diffusion(2, lambda x: np.linalg.norm(x, axis=1)))
    rep = probe_regularity(fld, [0.0, 1.0], 8)
    assert rep.shells[0].min_eig_a == 0.0
    assert not rep.a_bounded_away_from_zero


def test_regularity_flags_nonfinite_and_bad_radii():
    fld = CoefficientField(1, lambda x: 1 / (x - 1.0), identity_diffusion(1))
    rep = probe_regularity(fld, [1.0], 2)
    assert not rep.locally_bounded and rep.issues
    with pytest.raises(ValueError):
        probe_regularity(fld, [2.0, 1.0], 2)


def test_time_change_identity_clock():
    fld = CoefficientField(2, lambda x: x, lambda x: np.einsum("ni,nj->nij", x, x) + np.eye(2))
    tc = time_change_coeffs(fld, ScalarField.constant(1.0, 2))
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    np.testing.assert_array_equal(tc.b_batch(x), fld.b_batch(x))
    np.testing.assert_array_equal(tc.a_batch(x), fld.a_batch(x))


def test_time_change_quartic_clock():
    f = ScalarField.of_norm(lambda r: 1 / (2 + r ** 4), 3)
    tc = time_change_coeffs(bm(3), f)
    x = np.array([[1.0, 1.0, 0.0]])
    np.testing.assert_allclose(tc.a(x[0]), 6.0 * np.eye(3))
    np.testing.assert_array_equal(tc.b(x[0]), np.zeros(3))


@settings(max_examples=30)
@given(st.floats(0.1, 10.0))
def test_time_change_constant_scales(k):
    fld = CoefficientField(1, constant_vector([2.0]), identity_diffusion(1))
    tc = time_change_coeffs(fld, ScalarField.constant(k, 1))
    assert tc.b(0.5)[0] == pytest.approx(2.0 / k)
    assert tc.a(0.5)[0, 0] == pytest.approx(1.0 / k)


def test_time_change_rejects_nonpositive_clock():
    tc = time_change_coeffs(bm(1), ScalarField(1, lambda x: x[:, 0], "x"))
    with pytest.raises(CoefficientError, match="x="):
        tc.a_batch(np.array([[-1.0]]))


def test_generator_examples():
    sq = lambda x: (x @ x, 2 * x, 2 * np.eye(x.size))
    assert generator_apply(bm(3), sq, [0.4, 1.0, -2.0]) == pytest.approx(3.0)
    fld = CoefficientField(2, lambda x: x, identity_diffusion(2))
    assert generator_apply(fld, sq, [1.0, 1.0]) == pytest.approx(6.0)
    lin = lambda x: (x[0], np.eye(x.size)[0], np.zeros((x.size, x.size)))
    drift = CoefficientField(3, lambda x: np.sin(x), identity_diffusion(3, lambda x: 1 + x[:, 0] ** 2))
    x = np.array([0.7, -0.2, 3.0])
    assert generator_apply(drift, lin, x) == pytest.approx(math.sin(0.7))


def test_radial_field_values():
    s1 = make_radial_field(lambda r: np.ones_like(r), 3)
    np.testing.assert_array_equal(s1.a([3.0, 4.0, 0.0]), np.eye(3))
    s3 = make_radial_field(lambda r: (1 + r) ** 3, 3)
    np.testing.assert_allclose(s3.a([0.0, 1.0, 0.0]), 8.0 * np.eye(3))
    s4 = make_radial_field(lambda r: 2 + r ** 4, 3)
    x = np.array([[1.0, 2.0, 0.5]])
    np.testing.assert_allclose(s4.a_batch(x), identity_diffusion(3, lambda y: 2 + np.sum(y * y, 1) ** 2)(x))


def test_q_field_and_cac():
    fld = CoefficientField(2, constant_vector([1.0, 0.0]), identity_diffusion(2, lambda x: 2 + 0 * x[:, 0]),
                           constant_vector([0.0, 3.0]))
    q = fld.q_field()
    np.testing.assert_allclose(q.b([0.1, 0.2]), [1.0, 6.0])
    assert fld.cac([5.0, 5.0]) == pytest.approx(18.0)


def test_counterexample_first_balls():
    rho = lambda t: 4.0 ** (3 * (t + 1))
    # the monotonicity probe reaches t = 64, where rho overflows to inf
    with np.errstate(over="ignore"):
        spec, g = build_counterexample_g(rho, 3, 2)
    assert spec.centers[0] == 1.0 and spec.radii[0] == pytest.approx(1 / 3)
    assert spec.centers[1] > 4.0
    assert spec.min_gap() > 0
    # off-ball branch
    assert g([0.0, 2.0, 0.0]) == pytest.approx(18.0)
    # inside the first ball
    assert g([1.0, 0.0, 0.0]) == pytest.approx(2.0 / rho(2 / 3))


def test_counterexample_linear_rho_bound():
    spec, g = build_counterexample_g(lambda t: 1 + t, 3, 4)
    # every ball centre sits on the first axis and g * rho(|x|) >= 1 + |x|^2 there
    for n in range(1, 5):
        x = spec.center(n)
        r = np.linalg.norm(x)
        assert g(x) * (1 + r) >= (1 + r * r) * (1 - 1e-12)
    assert all(b > a for a, b in zip(spec.centers, spec.centers[1:]))


def test_counterexample_errors():
    with pytest.raises(CounterexampleError, match="grows too slowly"):
        build_counterexample_g(lambda t: 1 + np.log1p(t), 3, 3, search_budget=1000)
    with pytest.raises(ValueError):
        build_counterexample_g(lambda t: 1 + t, 2, 3)
