import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcdiff.coeffs import CoefficientField, ScalarField, constant_vector, identity_diffusion, time_change_coeffs, \
    zero_drift
from tcdiff.girsanov import LOG_Z_MAX, DichotomyConfig, UIVerdict, auxiliary_field, classify_ladder, \
    density_from_path, dichotomy_verdict, ladder_rows, route_auxiliary, route_perpetual, simulate_density, \
    time_changed_pair, ui_martingale_check
from tcdiff.sde import SimConfig, simulate_path
from tcdiff.verdict import Outcome
from tcdiff.zoo import build_model


def field_1d(b, c):
    return CoefficientField(1, constant_vector([b]), identity_diffusion(1), constant_vector([c]))


def test_null_direction_gives_unit_density():
    fld = CoefficientField(2, zero_drift(2), identity_diffusion(2), constant_vector([0.0, 0.0]))
    dp = simulate_density(fld, np.zeros(2), SimConfig(seed=1, t_max=2.0))
    np.testing.assert_array_equal(dp.z_values, 1.0)
    rep = ui_martingale_check(fld, np.zeros(2), 1000, (1.0, 2.0), SimConfig(seed=1))
    assert rep.verdict is UIVerdict.UI_PLAUSIBLE


def test_sign_convention_matches_price_process():
    # b = 1, c = -1: Q = MP(1, 0) and Z = exp(X - x0 - t/2) along Q-paths
    fld = field_1d(1.0, -1.0)
    dp = simulate_density(fld, [0.3], SimConfig(seed=5, t_max=3.0))
    expected = dp.path.states[:, 0] - 0.3 - 0.5 * dp.times
    np.testing.assert_allclose(dp.log_z, expected, atol=1e-12)
    np.testing.assert_allclose(dp.a_theta, dp.times, atol=1e-12)


def test_density_from_given_path_uses_left_points():
    fld = CoefficientField(1, zero_drift(1), identity_diffusion(1), lambda x: x)
    p = simulate_path(fld.q_field(), [1.0], SimConfig(seed=2, t_max=1.0))
    dp = density_from_path(fld, p)
    x, t = p.states[:, 0], p.times
    dxbar = np.diff(x) - x[:-1] * np.diff(t)
    expected = -np.cumsum(x[:-1] * dxbar) - 0.5 * np.cumsum(x[:-1] ** 2 * np.diff(t))
    np.testing.assert_allclose(dp.log_z[1:], expected, rtol=1e-12, atol=1e-12)
    assert dp.log_z_at(10.0)[0] == dp.log_z[-1]


def test_density_overflow_is_clamped():
    # evaluated along a P-path the exponent grows like |c|^2 t / 2
    fld = field_1d(0.0, 200.0)
    dp = density_from_path(fld, simulate_path(fld, [0.0], SimConfig(seed=3, t_max=1.0)))
    assert dp.overflow and dp.log_z.max() == LOG_Z_MAX


def test_geometric_brownian_motion_not_ui():
    rep = ui_martingale_check(field_1d(1.0, -1.0), [0.0], 1000, (1.0, 5.0, 20.0, 50.0), SimConfig(seed=7))
    assert rep.verdict is UIVerdict.NOT_UI
    assert rep.rows[-1].median < 0.01


def test_fuchsian_pair_ui_plausible():
    m = build_model("fuchsian:g=quartic")
    rep = ui_martingale_check(m.field, m.x0, 1000, (1.0, 5.0, 20.0), SimConfig(seed=7))
    assert rep.verdict is UIVerdict.UI_PLAUSIBLE


def test_ui_check_needs_paths():
    with pytest.raises(ValueError):
        ui_martingale_check(field_1d(1.0, -1.0), [0.0], 10, (1.0,))


def _rows(means, ses, medians, shares):
    from tcdiff.girsanov import LadderRow
    return [LadderRow(float(i), m, s, md, sh) for i, (m, s, md, sh) in enumerate(zip(means, ses, medians, shares))]


def test_classify_ladder_cases():
    ok = _rows([1.0, 0.99, 1.01], [0.01] * 3, [0.9, 0.8, 0.8], [0.05, 0.06, 0.05])
    assert classify_ladder(ok)[0] is UIVerdict.UI_PLAUSIBLE
    collapse = _rows([1.0, 1.0, 1.0], [0.05] * 3, [0.9, 0.2, 0.01], [0.05, 0.2, 0.3])
    assert classify_ladder(collapse)[0] is UIVerdict.NOT_UI
    escape = _rows([1.0, 0.9, 0.5], [0.01] * 3, [0.9, 0.9, 0.9], [0.05, 0.05, 0.05])
    assert classify_ladder(escape)[0] is UIVerdict.NOT_UI
    heavy = _rows([1.0, 1.0, 1.0], [0.05, 0.2, 0.5], [0.9, 0.9, 0.9], [0.05, 0.1, 0.15])
    verdict, diag = classify_ladder(heavy)
    assert verdict is UIVerdict.UNDETERMINED and "importance sampling" in diag


@settings(max_examples=40, deadline=None)
@given(st.integers(100, 2000), st.floats(0.1, 3.0))
def test_ladder_rows_scale_free_shares(n, k):
    z = np.random.default_rng(n).lognormal(size=(n, 2))
    a, b = ladder_rows(z, [1, 2]), ladder_rows(k * z, [1, 2])
    for r, s in zip(a, b):
        assert s.mean == pytest.approx(k * r.mean) and s.top_share == pytest.approx(r.top_share)
        assert 0 < r.top_share <= 1


def test_auxiliary_field_is_cac_time_change():
    m = build_model("fuchsian:g=quartic")
    aux = auxiliary_field(m.field)
    ref = time_change_coeffs(m.field, m.field.cac_field())
    x = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
    np.testing.assert_allclose(aux.a_batch(x), ref.a_batch(x))
    # with c = g^{-1/2} e_1 the auxiliary diffusion is g Id
    np.testing.assert_allclose(aux.a_batch(x)[:, 0, 0], 2 + np.sum(x * x, 1) ** 2)


def test_time_changed_pair_keeps_direction():
    m = build_model("bmdrift")
    f = ScalarField.constant(2.0, 1)
    tc = time_changed_pair(m.field, f)
    assert tc.c([0.3])[0] == 1.0 and tc.a([0.3])[0, 0] == 0.5


def test_routes_for_bm_versus_drift():
    m = build_model("bmdrift")
    cfg = SimConfig(seed=3, t_max=50.0)
    r1 = route_perpetual(m.field, m.x0, 100, cfg)
    r2 = route_auxiliary(m.field, m.x0, 100, cfg)
    assert r1.estimate == 0.0 and r1.detail["divergent"] == 100
    assert r2.estimate == 0.0


def test_dichotomy_bm_versus_drift_singular():
    m = build_model("bmdrift")
    v = dichotomy_verdict(m.field, m.x0, 200, SimConfig(seed=3))
    assert v.outcome is Outcome.SINGULAR and not v.flags


def test_dichotomy_fuchsian_absolutely_continuous():
    m = build_model("fuchsian:g=quartic")
    v = dichotomy_verdict(m.field, m.x0, 200, SimConfig(seed=3), DichotomyConfig(ladder=(1.0, 5.0, 20.0)))
    assert v.outcome is Outcome.ABSOLUTELY_CONTINUOUS
    assert "route-disagreement" not in v.flags


def test_dichotomy_rejects_degenerate_direction():
    fld = CoefficientField(1, zero_drift(1), identity_diffusion(1), constant_vector([0.0]))
    with pytest.raises(ValueError, match="bounded away from zero"):
        dichotomy_verdict(fld, [0.0], 100)
    with pytest.raises(ValueError):
        dichotomy_verdict(CoefficientField(1, zero_drift(1), identity_diffusion(1)), [0.0], 100)
