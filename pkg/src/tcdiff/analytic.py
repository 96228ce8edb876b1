"""Integral tests for explosion, absolute continuity and singularity.

All improper integrals go through the doubling classifier of
:mod:`tcdiff.quadrature`, which answers YES / NO / UNDETERMINED and never
extrapolates beyond what the computed tail supports.  Pointwise envelope
hypotheses are checked on sampled shells only, and verdicts that rest on
them say so in their evidence.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientField, ScalarField, profile_fn, shell_points
from .quadrature import (
    QuadratureConfig,
    TailResult,
    Tri,
    classify_nested,
    classify_plain,
    classify_scale,
    coarse_sphere_rule,
    sphere_rule,
)
from .verdict import Outcome, Verdict

SAMPLED = "sampled-hypothesis"


@dataclass(frozen=True)
class IntegralTestSpec:
    """Envelopes ``A > 0`` and ``B`` on ``[lo, inf)`` for the nested integral test."""

    A: ScalarField
    B: ScalarField
    lo: float
    quad: QuadratureConfig = QuadratureConfig()

    def __post_init__(self):
        u = self.lo + np.geomspace(1e-3, 1e9, 200)
        u = np.concatenate([[self.lo], u])
        av = profile_fn(self.A)(u)
        if not np.all(np.isfinite(av)) or np.any(av <= 0):
            i = int(np.argmax(~(av > 0) | ~np.isfinite(av)))
            raise ValueError(f"A must be strictly positive on [lo, inf); A({u[i]:g}) = {av[i]!r}")

    def logA(self, u):
        return np.log(profile_fn(self.A)(u))

    def Bf(self, u):
        return profile_fn(self.B)(u)


def nested_integral_converges(spec: IntegralTestSpec):
    """Classify ``int_lo^inf 1/C(z) int_lo^z C(u)/A(u) du dz``.

    Returns ``(tri, partial_values, result)``.
    """
    res = classify_nested(spec.logA, spec.Bf, spec.lo, spec.quad)
    return res.tri, res.partial_values, res


@dataclass(frozen=True)
class ShellProbe:
    n_shells: int = 40
    samples: int = 64
    growth: float = 2.0 ** 0.75  # ratio between consecutive shell radii

    def radii(self, r_min: float) -> np.ndarray:
        return r_min * self.growth ** np.arange(self.n_shells)


def _envelope_check(fld: CoefficientField, spec: IntegralTestSpec, r_min: float, probe: ShellProbe,
                    direction: int):
    """Worst violation of the pointwise envelope bounds on sampled shells.

    ``direction = +1`` checks ``A <= <x,ax>/<c,ac>`` and ``<x,ax> B <= tr a + 2<x,b>``;
    ``direction = -1`` the reversed pair.  Returns ``(ok, worst_point, message)``.
    """
    Af, Bf = profile_fn(spec.A), profile_fn(spec.B)
    worst = None
    for r in probe.radii(r_min):
        x = shell_points(r, fld.dim, probe.samples)
        a = fld.a_batch(x)
        b = fld.b_batch(x)
        cac = fld.cac_batch(x)
        if np.any(~(cac > 0)):
            i = int(np.argmax(~(cac > 0)))
            return False, x[i], f"<c,ac> = {cac[i]:.3g} is not positive"
        xax = np.einsum("ni,nij,nj->n", x, a, x)
        u = 0.5 * np.einsum("ni,ni->n", x, x)
        lhs1, rhs1 = Af(u), xax / cac
        lhs2, rhs2 = xax * Bf(u), np.einsum("nii->n", a) + 2 * np.einsum("ni,ni->n", x, b)
        slack1 = 1e-9 * (np.abs(lhs1) + np.abs(rhs1))
        slack2 = 1e-9 * (np.abs(lhs2) + np.abs(rhs2)) + 1e-12
        v1 = direction * (lhs1 - rhs1) > slack1
        v2 = direction * (lhs2 - rhs2) > slack2
        if v1.any():
            i = int(np.argmax(v1))
            return False, x[i], f"A bound violated: {lhs1[i]:.6g} vs {rhs1[i]:.6g}"
        if v2.any():
            i = int(np.argmax(v2))
            return False, x[i], f"B bound violated: {lhs2[i]:.6g} vs {rhs2[i]:.6g}"
    return True, worst, "bounds hold on all sampled shells"


def khasminskii_verdict(fld: CoefficientField, x0, specs, probe: ShellProbe = ShellProbe()) -> Verdict:
    """Absolute continuity / singularity from user-supplied radial envelopes.

    ``specs = (spec_eq, spec_noneq)``, either may be ``None``.  ``spec_eq``
    (lower end 1/2) tests the lower-envelope condition on ``|x| >= 1``
    together with convergence of the nested integral; ``spec_noneq`` (lower
    end ``R``) tests the upper-envelope condition on ``|x| >= sqrt(2R)``
    together with divergence.
    """
    spec_eq, spec_noneq = specs
    v = Verdict(Outcome.INCONCLUSIVE, flags=[SAMPLED])
    if fld.girsanov is None:
        v.add("girsanov direction", "missing", note="a Girsanov direction c is required")
        return v
    if spec_eq is not None:
        ok, pt, msg = _envelope_check(fld, spec_eq, 1.0, probe, +1)
        v.add("lower envelope bounds", ok, "all sampled shells |x| >= 1",
              msg if pt is None else f"{msg} at x={np.round(pt, 6).tolist()}")
        if ok:
            tri, _, res = nested_integral_converges(spec_eq)
            v.add("nested integral (lower envelopes)", res.value, "finite", f"{tri.value}: {res.diagnostic}")
            if tri is Tri.YES:
                v.outcome = Outcome.ABSOLUTELY_CONTINUOUS
                return v
    if spec_noneq is not None:
        r_min = math.sqrt(2 * spec_noneq.lo)
        ok, pt, msg = _envelope_check(fld, spec_noneq, r_min, probe, -1)
        v.add("upper envelope bounds", ok, f"all sampled shells |x| >= {r_min:.6g}",
              msg if pt is None else f"{msg} at x={np.round(pt, 6).tolist()}")
        if ok:
            tri, _, res = nested_integral_converges(spec_noneq)
            v.add("nested integral (upper envelopes)", res.value, "infinite", f"{tri.value}: {res.diagnostic}")
            if tri is Tri.NO:
                v.outcome = Outcome.SINGULAR
    return v


# --------------------------------------------------------------------------
# time-changed Brownian motion
# --------------------------------------------------------------------------


def _shell_means(g: ScalarField, x0: np.ndarray, nodes: np.ndarray, weights: np.ndarray):
    d = nodes.shape[1]

    def log_integrand(rho):
        rho = np.asarray(rho, dtype=float)
        pts = x0[None, None, :] + rho[:, None, None] * nodes[None, :, :]
        gv = g.values(pts.reshape(-1, d)).reshape(rho.size, -1)
        with np.errstate(divide="ignore"):
            return np.log(rho) + np.log((weights[None, :] / gv).sum(axis=1))

    return log_integrand


def growth_probe(g: ScalarField, n_shells: int = 41, samples: int = 26) -> dict:
    """Sampled ratios ``g / (1 + |x|)^2`` on shells of radius ``2^k``.

    ``lower`` holds when the minimum ratio stays bounded below over the last
    ten shells (no decay by more than a factor 4); ``upper`` likewise for
    the maximum ratio.  This is a probe, not a certificate.
    """
    qmin, qmax = [], []
    for k in range(n_shells):
        r = 2.0 ** k
        x = shell_points(r, g.dim, samples)
        q = g.values(x) / (1 + r) ** 2
        qmin.append(float(q.min()))
        qmax.append(float(q.max()))
    lower = min(qmin) > 0 and qmin[-1] >= 0.25 * qmin[-11]
    upper = qmax[-1] <= 4.0 * qmax[-11]
    return {"lower": bool(lower), "upper": bool(upper), "min_ratio": min(qmin), "max_ratio": max(qmax)}


def fuchsian_test(g: ScalarField, x0, d: int, quad: QuadratureConfig = QuadratureConfig()) -> Verdict:
    """Explosion of MP(g Id, 0) from the integral of ``g^{-1}(x) |x - x0|^{2-d}``.

    Spherical shells around ``x0``: the radial integrand is
    ``rho * (surface integral of 1/g)``, the angular part uses the default
    sphere rule and is checked against a coarser companion rule.
    Convergence gives Explosive.  Divergence gives Conservative when the
    sampled growth of ``g`` is at least or at most quadratic; otherwise the
    verdict stays Inconclusive.
    """
    if d < 3:
        raise ValueError("the test is for d >= 3")
    if g.dim != d:
        raise ValueError("g has the wrong dimension")
    x0 = np.asarray(x0, dtype=float).reshape(d)
    nodes, w = sphere_rule(d, quad.angular_nodes)
    res = classify_plain(_shell_means(g, x0, nodes, w), 0.0, quad)
    cn, cw = coarse_sphere_rule(d, quad.angular_nodes)
    chk = classify_plain(_shell_means(g, x0, cn, cw), 0.0, quad)
    v = Verdict(Outcome.INCONCLUSIVE)
    v.add("integral", res.value, "finite", f"{res.tri.value}: {res.diagnostic}")
    m = min(len(res.log_contributions), len(chk.log_contributions))
    a = np.exp(res.log_contributions[:m])
    b = np.exp(chk.log_contributions[:m])
    if res.tri is Tri.YES:
        disc = abs(res.value - chk.value) / res.value if res.value > 0 else 0.0
    else:
        disc = float(np.max(np.abs(a - b) / np.maximum(a, 1e-300))) if m else 0.0
        disc = min(disc, abs(a[-1] - b[-1]) / max(a[-1], 1e-300)) if m else 0.0
    v.add("angular discrepancy", disc, quad.angular_tol, f"{len(w)}-node vs {len(cw)}-node rule")
    if disc > quad.angular_tol:
        v.flags.append("angular quadrature unresolved")
        return v
    if res.tri is Tri.YES:
        v.outcome = Outcome.EXPLOSIVE
    elif res.tri is Tri.NO:
        gp = growth_probe(g)
        v.add("growth probe", gp, "g >= C(1+|x|)^2 or g <= C(1+|x|)^2", SAMPLED)
        if gp["lower"] or gp["upper"]:
            v.outcome = Outcome.CONSERVATIVE
            v.flags.append(SAMPLED)
    return v


def radial_explosion_test(s, x0_norm: float, quad: QuadratureConfig = QuadratureConfig(), d: int = 3) -> Verdict:
    """Explosion of MP(s(|x|) Id, 0) from ``int_{|x0|}^inf r / s(r) dr``.

    In dimensions one and two the process is always conservative.
    """
    v = Verdict(Outcome.INCONCLUSIVE)
    if d <= 2:
        v.outcome = Outcome.CONSERVATIVE
        v.add("dimension", d, "<= 2", "recurrent Brownian motion; no integral needed")
        return v
    sf = profile_fn(s)
    with np.errstate(divide="ignore"):
        res = classify_plain(lambda r: np.log(r) - np.log(sf(r)), float(x0_norm), quad)
    v.add("integral", res.value, "finite", f"{res.tri.value}: {res.diagnostic}")
    if res.tri is Tri.YES:
        v.outcome = Outcome.EXPLOSIVE
    elif res.tri is Tri.NO:
        v.outcome = Outcome.CONSERVATIVE
    return v


# --------------------------------------------------------------------------
# one-dimensional Feller test
# --------------------------------------------------------------------------


class FellerOutcome(enum.Enum):
    EXPLODES_AS = "ExplodesAS"
    CONSERVATIVE_AS = "ConservativeAS"
    UNDETERMINED = "Undetermined"


@dataclass
class FellerResult:
    outcome: FellerOutcome
    v_plus: TailResult
    v_minus: TailResult
    p_plus: TailResult
    p_minus: TailResult
    diagnostic: str = ""

    def as_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "v(+inf)": self.v_plus.tri.value,
            "v(-inf)": self.v_minus.tri.value,
            "p(+inf)": self.p_plus.tri.value,
            "p(-inf)": self.p_minus.tri.value,
            "diagnostic": self.diagnostic,
        }


def feller_test_1d(a, b, x0: float, quad: QuadratureConfig = QuadratureConfig()) -> FellerResult:
    """Zero-one explosion classification of MP(a, b, x0) on the real line.

    ``v(x) = int_{x0}^x exp(-beta(y)) int_{x0}^y exp(beta(z)) 2/a(z) dz dy`` with
    ``beta' = 2b/a`` is the nested integral with ``A = a/2`` and
    ``B = 2b/a``; the left end is handled by reflection.  Explosion is almost
    sure iff both ends have ``v`` finite, or one end has ``v`` finite and
    the other has infinite scale.  Explosion with probability strictly
    between 0 and 1 is reported as Undetermined with a diagnostic.
    """
    af, bf = profile_fn(a), profile_fn(b)
    x0 = float(x0)

    def side(sign):
        A_log = lambda z: np.log(0.5 * af(sign * z))
        B = lambda z: sign * 2.0 * bf(sign * z) / af(sign * z)
        return classify_nested(A_log, B, sign * x0, quad), classify_scale(B, sign * x0, quad)

    vp, pp = side(1.0)
    vm, pm = side(-1.0)
    Y, N = Tri.YES, Tri.NO
    if vp.tri is N and vm.tri is N:
        return FellerResult(FellerOutcome.CONSERVATIVE_AS, vp, vm, pp, pm, "v infinite at both ends")
    if vp.tri is Y and vm.tri is Y:
        return FellerResult(FellerOutcome.EXPLODES_AS, vp, vm, pp, pm, "v finite at both ends")
    if vp.tri is Y and pm.tri is N:
        return FellerResult(FellerOutcome.EXPLODES_AS, vp, vm, pp, pm, "v(+inf) finite, p(-inf) infinite")
    if vm.tri is Y and pp.tri is N:
        return FellerResult(FellerOutcome.EXPLODES_AS, vp, vm, pp, pm, "v(-inf) finite, p(+inf) infinite")
    if Tri.UNDETERMINED in (vp.tri, vm.tri, pp.tri, pm.tri):
        return FellerResult(FellerOutcome.UNDETERMINED, vp, vm, pp, pm, "an end integral is undetermined")
    return FellerResult(FellerOutcome.UNDETERMINED, vp, vm, pp, pm,
                        "explosion probability strictly between 0 and 1")
