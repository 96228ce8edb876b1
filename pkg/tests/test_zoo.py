import numpy as np
import pytest

from tcdiff.coeffs import probe_regularity
from tcdiff.zoo import FELLER_IDS, ZOO_IDS, UnknownModel, build_model, clock_field, parse_id


def test_parse_id():
    assert parse_id("radial:p=3,d=4") == ("radial", {"p": "3", "d": "4"})
    assert parse_id("bm3") == ("bm3", {})
    with pytest.raises(UnknownModel):
        parse_id("radial:p")


@pytest.mark.parametrize("model_id", ZOO_IDS)
def test_zoo_models_build_and_are_regular(model_id):
    m = build_model(model_id)
    assert m.x0.shape == (m.dim,)
    rep = probe_regularity(m.field, [0.0, 1.0, 4.0], 8)
    assert rep.locally_bounded and rep.psd
    pts = np.random.default_rng(0).normal(scale=5.0, size=(50, m.dim))
    assert np.all(m.clock.values(pts) > 0)


def test_feller_models_carry_profiles():
    for mid in FELLER_IDS:
        m = build_model(mid)
        a, b = m.profiles
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(m.field.a_batch(x[:, None])[:, 0, 0], a(x))
        np.testing.assert_allclose(m.field.b_batch(x[:, None])[:, 0], b(x))


def test_unknown_names():
    for bad in ("nope", "feller:m=nope", "tcbm:g=nope", "counterexample:rho=nope"):
        with pytest.raises(UnknownModel):
            build_model(bad)
    with pytest.raises(UnknownModel):
        clock_field("sqrt", 3)


def test_clock_names():
    assert clock_field("const=2.5", 2)([1.0, 1.0]) == 2.5
    assert clock_field("inv-quartic", 3)([1.0, 0.0, 0.0]) == pytest.approx(1 / 3)


def test_radial_parameters():
    m = build_model("radial:p=2,d=4,x0=1.5")
    assert m.dim == 4 and m.x0[0] == 1.5 and "conservative" in m.tags
    assert m.field.a([1.0, 0, 0, 0])[0, 0] == pytest.approx(4.0)
