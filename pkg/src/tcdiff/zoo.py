"""Named models addressable by string ids such as ``"radial:p=3"``.

An id is ``family`` or ``family:key=value,key=value``.  Every model carries
a default clock density used by the time-change checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coeffs import (CoefficientField, ScalarField, build_counterexample_g, constant_vector, identity_diffusion,
                     make_radial_field, zero_drift)


class UnknownModel(KeyError):
    pass


@dataclass
class Model:
    id: str
    field: CoefficientField
    x0: np.ndarray
    clock: ScalarField
    tags: frozenset = frozenset()
    # one-dimensional (a, b) profiles for the Feller test
    profiles: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.field.dim


def parse_id(model_id: str) -> tuple:
    fam, _, rest = model_id.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise UnknownModel(f"malformed parameter {item!r} in {model_id!r}")
        params[k.strip()] = v.strip()
    return fam.strip(), params


def _norm2(x):
    return np.einsum("ni,ni->n", x, x)


G_PROFILES: dict = {
    "quartic": (lambda r: 2.0 + r ** 4, "2+|x|^4"),
    "quadratic": (lambda r: (1.0 + r) ** 2, "(1+|x|)^2"),
    "one": (lambda r: np.ones_like(r), "1"),
}

RHO_PROFILES: dict = {
    "linear": lambda t: 1.0 + t,
    "quadratic": lambda t: (1.0 + t) ** 2,
}


def g_field(name: str, d: int) -> ScalarField:
    try:
        fn, label = G_PROFILES[name]
    except KeyError:
        raise UnknownModel(f"unknown g profile {name!r}; known: {sorted(G_PROFILES)}") from None
    return ScalarField.of_norm(fn, d, label)


def clock_field(name: str, d: int) -> ScalarField:
    """Clock densities by name: ``inv-quartic``, ``inv-quadratic``, ``one`` or ``const=k``."""
    if name.startswith("const="):
        return ScalarField.constant(float(name[6:]), d)
    if name == "one":
        return ScalarField.constant(1.0, d, "1")
    if name.startswith("inv-"):
        return g_field(name[4:], d).reciprocal()
    raise UnknownModel(f"unknown clock {name!r}")


def _one_d(a: Callable, b: Callable, name: str) -> CoefficientField:
    return CoefficientField(1, lambda x: b(x[:, 0])[:, None], lambda x: a(x[:, 0])[:, None, None], name=name)


FELLER: dict = {
    "bm": (lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "drift": (lambda x: np.ones_like(x), lambda x: np.ones_like(x)),
    "xabsx": (lambda x: np.ones_like(x), lambda x: x * np.abs(x)),
    "quadratic": (lambda x: 1.0 + x * x, lambda x: x * (1.0 + x * x)),
    "driftless15": (lambda x: (1.0 + x * x) ** 1.5, lambda x: np.zeros_like(x)),
    "linear": (lambda x: np.ones_like(x), lambda x: x),
}


def _bm(d: int, model_id: str) -> Model:
    fld = CoefficientField(d, zero_drift(d), identity_diffusion(d), name=f"bm{d}")
    return Model(model_id, fld, np.zeros(d), clock_field("inv-quartic", d), frozenset({"conservative"}))


def build_model(model_id: str) -> Model:
    fam, p = parse_id(model_id)
    d = int(p.get("d", 3))
    if fam in ("bm1", "bm2", "bm3"):
        return _bm(int(fam[2]), model_id)
    if fam == "bm":
        return _bm(d, model_id)
    if fam == "drift":
        d = int(p.get("d", 1))
        e = np.zeros(d)
        e[0] = 1.0
        fld = CoefficientField(d, constant_vector(e), identity_diffusion(d), name=f"drift{d}")
        return Model(model_id, fld, np.zeros(d), clock_field("inv-quadratic", d), frozenset({"conservative"}))
    if fam == "radial":
        pw = float(p.get("p", 3))
        s = ScalarField.profile(lambda r: (1.0 + r) ** pw, f"(1+r)^{pw:g}")
        x0 = np.zeros(d)
        x0[0] = float(p.get("x0", 0.0))
        tag = "explosive" if pw > 2 and d >= 3 else "conservative"
        return Model(model_id, make_radial_field(s, d), x0, clock_field("inv-quadratic", d), frozenset({tag}),
                     extra={"s": s, "p": pw})
    if fam == "tcbm":
        g = g_field(p.get("g", "quartic"), d)
        fld = CoefficientField(d, zero_drift(d), identity_diffusion(d, g.values), name=f"tcbm[{g.name}]")
        return Model(model_id, fld, np.zeros(d), clock_field("inv-quadratic", d), frozenset({"explosive"}),
                     extra={"g": g})
    if fam == "fuchsian":
        g = g_field(p.get("g", "quartic"), d)

        def c(x, gv=g.values):
            out = np.zeros_like(x)
            out[:, 0] = gv(x) ** -0.5
            return out

        fld = CoefficientField(d, zero_drift(d), identity_diffusion(d), c, name=f"fuchsian[{g.name}]")
        return Model(model_id, fld, np.zeros(d), g.reciprocal(), frozenset({"girsanov", "conservative"}),
                     extra={"g": g})
    if fam == "counterexample":
        rho_name = p.get("rho", "linear")
        if rho_name not in RHO_PROFILES:
            raise UnknownModel(f"unknown rho {rho_name!r}; known: {sorted(RHO_PROFILES)}")
        rho = ScalarField.profile(RHO_PROFILES[rho_name], f"rho[{rho_name}]")
        spec, g = build_counterexample_g(rho, d, int(p.get("n", 4)))
        fld = CoefficientField(d, zero_drift(d), identity_diffusion(d, g.values), name=f"counterexample[{rho_name}]")
        return Model(model_id, fld, np.zeros(d), clock_field("inv-quadratic", d), frozenset({"explosive"}),
                     extra={"g": g, "spec": spec})
    if fam == "bmdrift":
        fld = CoefficientField(1, zero_drift(1), identity_diffusion(1), constant_vector([1.0]), name="bm-vs-drift")
        return Model(model_id, fld, np.zeros(1), clock_field("inv-quadratic", 1), frozenset({"girsanov", "conservative"}))
    if fam == "ou":
        fld = _one_d(lambda x: np.ones_like(x), lambda x: -x, "ou")
        return Model(model_id, fld, np.zeros(1), clock_field("inv-quadratic", 1), frozenset({"conservative"}),
                     profiles=(lambda x: np.ones_like(x), lambda x: -x))
    if fam == "feller":
        name = p.get("m", next(iter(p), "bm")) if p else "bm"
        if name not in FELLER:
            raise UnknownModel(f"unknown one-dimensional model {name!r}; known: {sorted(FELLER)}")
        a, b = FELLER[name]
        return Model(model_id, _one_d(a, b, f"feller[{name}]"), np.zeros(1), clock_field("inv-quadratic", 1),
                     frozenset({"one-dim"}), profiles=(a, b))
    raise UnknownModel(f"unknown model id {model_id!r}")


ZOO_IDS = (
    "bm1", "bm2", "bm3", "drift:d=1", "radial:p=3", "radial:p=2", "tcbm:g=quartic", "fuchsian:g=quartic",
    "counterexample:rho=linear", "bmdrift", "ou",
    *(f"feller:m={k}" for k in FELLER),
)

FELLER_IDS = tuple(f"feller:m={k}" for k in FELLER)
