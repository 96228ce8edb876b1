import math

import numpy as np
import pytest

from tcdiff.coeffs import CoefficientError, CoefficientField, constant_vector, identity_diffusion, make_radial_field, \
    zero_drift
from tcdiff.sde import ExplosionRule, PathStatus, SimConfig, estimate_explosion_prob, iter_path_chunks, \
    martingale_defect, simulate_path, simulate_paths, summarize_statuses, wilson_ci


def bm(d):
    return CoefficientField(d, zero_drift(d), identity_diffusion(d))


def test_deterministic_ode_path():
    fld = CoefficientField(1, constant_vector([1.0]), lambda x: np.zeros((x.shape[0], 1, 1)))
    p = simulate_path(fld, [0.0], SimConfig(t_max=1.0))
    assert p.status is PathStatus.ALIVE and math.isinf(p.theta_hat)
    assert p.t_end == pytest.approx(1.0)
    np.testing.assert_allclose(p.states[:, 0], p.times, atol=1e-12)


def test_bm3_never_explodes():
    est = estimate_explosion_prob(bm(3), np.zeros(3), 200, SimConfig(seed=3, t_max=20.0))
    assert est.n_exploded == 0 and est.p_hat == 0.0


def test_paths_reproducible_and_batch_invariant():
    fld = make_radial_field(lambda r: (1 + r) ** 3, 3)
    cfg = SimConfig(seed=11, t_max=2.0)
    a = simulate_paths(fld, [1.0, 0, 0], cfg.with_(chunk_size=3), 7)
    b = simulate_paths(fld, [1.0, 0, 0], cfg.with_(chunk_size=7, workers=2), 7)
    c = [ch[0] for ch in iter_path_chunks(fld, [1.0, 0, 0], cfg, 1, path_ids=[5])]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.states, y.states)
        assert x.status is y.status and x.theta_hat == y.theta_hat
    np.testing.assert_array_equal(c[0].states, a[5].states)


def test_radial_cubic_explodes_from_e1():
    fld = make_radial_field(lambda r: (1 + r) ** 3, 3)
    fr = [estimate_explosion_prob(fld, [1.0, 0, 0], 100, SimConfig(seed=5, t_max=t, record=False)).p_hat
          for t in (0.5, 50.0)]
    assert fr[0] <= fr[1] and fr[1] >= 0.95


def test_exploded_path_hits_levels_in_order():
    fld = make_radial_field(lambda r: (1 + r) ** 3, 3)
    p = next(q for q in simulate_paths(fld, [1.0, 0, 0], SimConfig(seed=5), 20) if q.status is PathStatus.EXPLODED)
    fin = p.hits[np.isfinite(p.hits)]
    assert np.all(np.diff(fin) >= 0)
    assert p.theta_hat in fin and p.theta_hat <= p.t_end


def test_explosion_rule():
    rule = ExplosionRule(r_exp=8.0, increment_cap=0.1, summable_levels=2)
    levels = 2.0 ** np.arange(6)
    assert rule.first_level(levels, np.array([0, 1, 2, 2.05, 2.1, 2.12])) == 4
    assert rule.first_level(levels, np.array([0, 1, 2, 3, 4, 5.0])) is None
    assert rule.first_level(levels, np.array([0, 1, 1.01, 1.02, np.inf, np.inf])) == 3


def test_truncation_and_summary():
    fld = make_radial_field(lambda r: (1 + r) ** 3, 3)
    paths = simulate_paths(fld, [1.0, 0, 0], SimConfig(seed=2, r_exp=1e3, r_trunc=2e3, increment_cap=1e-9), 30)
    est = summarize_statuses(paths)
    assert est.n_truncated > 0.2 * est.n_paths and est.inconclusive


def test_wilson_interval():
    lo, hi = wilson_ci(50, 100)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(0.192, abs=2e-3)
    assert wilson_ci(0, 0) == (0.0, 1.0)


def test_estimate_needs_enough_paths():
    with pytest.raises(ValueError):
        estimate_explosion_prob(bm(1), [0.0], 10, SimConfig())


def test_psd_failure_names_point():
    fld = CoefficientField(1, zero_drift(1), lambda x: -np.ones((x.shape[0], 1, 1)))
    with pytest.raises(CoefficientError, match="x="):
        simulate_path(fld, [0.5], SimConfig(t_max=0.1))


def test_invalid_configs():
    for kw in ({"h": 0}, {"t_max": -1}, {"r_exp": 10, "r_trunc": 5}, {"level_radii": (2.0, 1.0)}):
        with pytest.raises(ValueError):
            SimConfig(**kw)


def _sq(x):
    return np.sum(x * x, 1), 2 * x, np.broadcast_to(2 * np.eye(x.shape[1]), (x.shape[0], x.shape[1], x.shape[1]))


def _lin(x):
    g = np.zeros_like(x)
    g[:, 0] = 1.0
    return x[:, 0], g, np.zeros((x.shape[0], x.shape[1], x.shape[1]))


@pytest.mark.parametrize("fld,fn,x0", [
    (bm(3), _lin, np.zeros(3)),
    (bm(3), _sq, np.zeros(3)),
    (CoefficientField(1, lambda x: x, identity_diffusion(1)), _sq, np.zeros(1)),
])
def test_martingale_defect_is_zero(fld, fn, x0):
    rows = martingale_defect(fld, x0, fn, 400, [0.5, 1.0], SimConfig(seed=8, t_max=1.0))
    for t, m, se in rows:
        assert abs(m) <= 3 * se + 0.02 * t
