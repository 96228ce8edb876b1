import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate

from tcdiff.analytic import FellerOutcome, IntegralTestSpec, feller_test_1d, fuchsian_test, growth_probe, \
    khasminskii_verdict, nested_integral_converges, radial_explosion_test
from tcdiff.coeffs import CoefficientField, ScalarField, constant_vector, identity_diffusion, zero_drift
from tcdiff.harness.acceptance import POWER_LAW_CASES, power_law_spec
from tcdiff.quadrature import QuadratureConfig, Tri
from tcdiff.verdict import Outcome
from tcdiff.zoo import build_model, g_field


def prof(fn, name="p"):
    return ScalarField.profile(fn, name)


def symbolic_nested(alpha, beta):
    """Exact value of int_1^inf z^-beta int_1^z u^(beta-alpha) du dz (z = e^s, u = e^t)."""
    s, t = sp.symbols("s t", nonnegative=True)
    a, b = sp.nsimplify(alpha), sp.nsimplify(beta)
    inner = sp.integrate(sp.exp(t * (b - a + 1)), (t, 0, s), conds="none")
    return sp.integrate(sp.exp(s * (1 - b)) * inner, (s, 0, sp.oo), conds="none")


@pytest.mark.parametrize("alpha,beta,finite", POWER_LAW_CASES)
def test_power_law_table_against_symbolic_oracle(alpha, beta, finite):
    exact = symbolic_nested(alpha, beta)
    assert bool(exact.is_finite) == finite
    tri, _, res = nested_integral_converges(power_law_spec(alpha, beta))
    assert tri is not (Tri.NO if finite else Tri.YES)
    if tri is Tri.YES:
        assert res.value == pytest.approx(float(exact), rel=1e-4)


def test_nested_examples():
    one = prof(lambda u: np.ones_like(u), "1")
    zero = prof(lambda u: np.zeros_like(u), "0")
    assert nested_integral_converges(IntegralTestSpec(one, zero, 0.5))[0] is Tri.NO
    assert nested_integral_converges(IntegralTestSpec(prof(lambda u: u ** 3), prof(lambda u: 2 / u), 1.0))[0] is Tri.YES
    assert nested_integral_converges(IntegralTestSpec(prof(lambda u: u ** 2), zero, 1.0))[0] is Tri.NO


def test_envelope_must_be_positive():
    with pytest.raises(ValueError, match="strictly positive"):
        IntegralTestSpec(prof(lambda u: u - 2.0), prof(lambda u: 0 * u), 1.0)


def test_khasminskii_fuchsian_absolutely_continuous():
    m = build_model("fuchsian:g=quartic")
    spec = IntegralTestSpec(prof(lambda u: 2 * u * (2 + 4 * u * u)), prof(lambda u: 1.5 / u), 0.5)
    v = khasminskii_verdict(m.field, m.x0, (spec, None))
    assert v.outcome is Outcome.ABSOLUTELY_CONTINUOUS
    assert "sampled-hypothesis" in v.flags


def test_khasminskii_bm_drift_singular():
    m = build_model("bmdrift")
    spec = IntegralTestSpec(prof(lambda u: 2 * u), prof(lambda u: 0.5 / u), 1.0)
    assert khasminskii_verdict(m.field, m.x0, (None, spec)).outcome is Outcome.SINGULAR
    # the same envelope cannot certify absolute continuity
    spec_eq = IntegralTestSpec(prof(lambda u: 2 * u), prof(lambda u: 0 * u), 0.5)
    assert khasminskii_verdict(m.field, m.x0, (spec_eq, None)).outcome is Outcome.INCONCLUSIVE


def test_khasminskii_degenerate_direction_is_inconclusive():
    fld = CoefficientField(2, zero_drift(2), identity_diffusion(2), constant_vector([0.0, 0.0]))
    spec = IntegralTestSpec(prof(lambda u: 2 * u), prof(lambda u: 0 * u), 0.5)
    assert khasminskii_verdict(fld, np.zeros(2), (spec, None)).outcome is Outcome.INCONCLUSIVE
    no_c = CoefficientField(2, zero_drift(2), identity_diffusion(2))
    assert khasminskii_verdict(no_c, np.zeros(2), (spec, None)).outcome is Outcome.INCONCLUSIVE


def test_khasminskii_bound_violation_reports_point():
    m = build_model("fuchsian:g=quartic")
    # far too large an A: the lower-envelope inequality fails
    spec = IntegralTestSpec(prof(lambda u: 1e6 * (1 + u ** 4)), prof(lambda u: 1.5 / u), 0.5)
    v = khasminskii_verdict(m.field, m.x0, (spec, None))
    assert v.outcome is Outcome.INCONCLUSIVE
    ev = v.get("lower envelope bounds")
    assert ev.value is False and "x=" in ev.note


def test_fuchsian_quartic_value():
    v = fuchsian_test(g_field("quartic", 3), np.zeros(3), 3)
    assert v.outcome is Outcome.EXPLOSIVE
    # 4 pi int_0^inf r / (2 + r^4) dr = 4 pi * pi / (4 sqrt 2)
    assert v.get("integral").value == pytest.approx(4 * math.pi * math.pi / (4 * math.sqrt(2)), rel=1e-4)


@pytest.mark.parametrize("name", ["quadratic", "one"])
def test_fuchsian_conservative(name):
    assert fuchsian_test(g_field(name, 3), np.zeros(3), 3).outcome is Outcome.CONSERVATIVE


def _off_centre_oracle(c):
    # the sphere average of 1/|x - x0| over |x| = r is 1/max(r, |x0|)
    f = lambda r: 4 * math.pi * r * r / (2 + r ** 4) / max(r, c)
    return integrate.quad(f, 0, c)[0] + integrate.quad(f, c, np.inf)[0]


def test_fuchsian_off_centre():
    x0 = np.array([3.0, 0, 0])
    coarse = fuchsian_test(g_field("quartic", 3), x0, 3)
    # the default 26-node rule disagrees with its 6-node companion: flagged, not decided
    assert coarse.outcome is Outcome.INCONCLUSIVE and "angular quadrature unresolved" in coarse.flags
    fine = fuchsian_test(g_field("quartic", 3), x0, 3, QuadratureConfig(angular_nodes=800))
    assert fine.outcome is Outcome.EXPLOSIVE
    assert fine.get("integral").value == pytest.approx(_off_centre_oracle(3.0), rel=1e-4)


def test_fuchsian_higher_dimension():
    assert fuchsian_test(g_field("quartic", 4), np.zeros(4), 4).outcome is Outcome.EXPLOSIVE
    with pytest.raises(ValueError):
        fuchsian_test(g_field("quartic", 2), np.zeros(2), 2)


def test_growth_probe():
    assert growth_probe(g_field("quadratic", 3))["lower"]
    assert growth_probe(g_field("one", 3))["upper"]


@pytest.mark.parametrize("p,outcome", [(3, Outcome.EXPLOSIVE), (2, Outcome.CONSERVATIVE), (0, Outcome.CONSERVATIVE)])
def test_radial(p, outcome):
    v = radial_explosion_test(prof(lambda r: (1 + r) ** p), 1.0)
    assert v.outcome is outcome
    if p == 3:
        # int_1^inf r (1+r)^-3 dr = [ -1/(1+r) + 1/(2 (1+r)^2) ]_1^inf = 1/2 - 1/8
        assert v.get("integral").value == pytest.approx(0.375, rel=1e-6)


def test_radial_low_dimension_is_conservative():
    assert radial_explosion_test(prof(lambda r: (1 + r) ** 3), 0.0, d=2).outcome is Outcome.CONSERVATIVE


one = lambda x: np.ones_like(x)
zero = lambda x: np.zeros_like(x)


@pytest.mark.parametrize("a,b,outcome", [
    (one, zero, FellerOutcome.CONSERVATIVE_AS),
    (one, one, FellerOutcome.CONSERVATIVE_AS),
    (one, lambda x: x * np.abs(x), FellerOutcome.EXPLODES_AS),
    (lambda x: 1 + x * x, lambda x: x * (1 + x * x), FellerOutcome.EXPLODES_AS),
    (one, lambda x: -x, FellerOutcome.CONSERVATIVE_AS),
    # a driftless diffusion on the line is in natural scale and cannot explode
    (lambda x: (1 + x * x) ** 1.5, zero, FellerOutcome.CONSERVATIVE_AS),
])
def test_feller(a, b, outcome):
    assert feller_test_1d(a, b, 0.0).outcome is outcome


def test_feller_partial_explosion_is_undetermined():
    # explodes to +inf with positive probability, escapes to -inf without exploding otherwise
    b = lambda x: np.where(x > 0, x * np.abs(x), -1.0)
    res = feller_test_1d(one, b, 0.0)
    assert res.outcome is FellerOutcome.UNDETERMINED
    assert "strictly between" in res.diagnostic
