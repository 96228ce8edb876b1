"""The acceptance suite: nine pass/fail criteria, each with its evidence."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..analytic import IntegralTestSpec, nested_integral_converges
from ..coeffs import ScalarField
from ..girsanov import dichotomy_verdict
from ..market import expected_price_curve, martingale_measure_check, one_dim_mart_criterion, scalar_market
from ..quadrature import Tri
from ..rng import derive_seed
from ..sde import SimConfig
from ..verdict import Outcome
from ..zoo import FELLER_IDS, ZOO_IDS, build_model, clock_field
from .experiments import (clock_identity_check, counterexample_experiment, feller_vs_mc, radial_experiment,
                          verify_timechange_law)
from .stats import ks_critical

# mean of int_0^inf ds / (2 + |B_s|^4) for 3-d Brownian motion from the origin:
# Green kernel 1/(2 pi |x|) gives 2 int_0^inf r / (2 + r^4) dr = pi / (2 sqrt 2)
GREEN_ORACLE = math.pi / (2.0 * math.sqrt(2.0))

# (alpha, beta, nested integral finite) for A(u) = u^alpha, B(u) = beta/u on [1, inf)
POWER_LAW_CASES = (
    (0.0, 0.0, False), (1.0, 0.0, False), (2.0, 0.0, False), (3.0, 0.0, False),
    (2.5, 1.0, False), (2.0, 1.0, False), (3.0, 2.0, True), (4.0, 2.0, True),
    (3.0, 3.0, True), (1.0, 2.0, False), (2.0, 2.0, False), (5.0, 3.0, True),
    (1.5, 0.5, False), (2.5, 0.5, False), (3.0, 0.5, False), (0.5, -0.5, False),
    (3.0, 1.5, True), (2.5, 1.5, True), (2.0, 1.5, False), (4.0, 0.0, False),
)


@dataclass(frozen=True)
class Scale:
    quick: bool = False
    n_law: int = 2000
    n_clock: int = 2000
    n_radial: int = 1000
    n_dichotomy: int = 1000
    n_feller: int = 1000
    n_market: int = 2000
    n_counterexample: int = 1000

    @classmethod
    def quick_scale(cls) -> "Scale":
        return cls(True, 400, 100, 300, 300, 300, 1000, 200)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    detail: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.title}: {self.summary}"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "summary": self.summary,
                "detail": self.detail}


def _cfg(seed: int, label: str, **kw) -> SimConfig:
    return SimConfig(seed=derive_seed(seed, label), **kw)


def criterion_timechange_law(scale: Scale, seed: int) -> CriterionResult:
    m = build_model("bm3")
    f = clock_field("inv-quartic", 3)
    p_cfg = _cfg(seed, "c1-p", t_max=math.inf, r_trunc=8192.0)
    q_cfg = _cfg(seed, "c1-q", t_max=50.0)
    rep = verify_timechange_law(m.field, f, m.x0, scale.n_law, p_cfg, q_cfg)
    d = rep.as_dict()
    crit = ks_critical(scale.n_law, scale.n_law)
    rel = abs(d["mean_a"] - GREEN_ORACLE) / GREEN_ORACLE
    ok = rep.ks.D < crit and rep.ks.mass_gap < 0.03 and rel <= 0.08
    d.update(critical=crit, oracle=GREEN_ORACLE, mean_rel_error=rel)
    s = (f"D={rep.ks.D:.4f} (< {crit:.4f}), mass_gap={rep.ks.mass_gap:.4f} (< 0.03), "
         f"mean A_theta={d['mean_a']:.4f} vs oracle {GREEN_ORACLE:.4f} (rel {rel:.3f} <= 0.08), "
         f"mean theta={d['mean_b']:.4f}")
    return CriterionResult(1, "time-change law", ok, s, d)


def criterion_clock_identities(scale: Scale, seed: int) -> CriterionResult:
    rows = {}
    ok = True
    worst_i = worst_r = 0.0
    for mid in ZOO_IDS:
        m = build_model(mid)
        rep = clock_identity_check(m.field, m.clock, m.x0, scale.n_clock, _cfg(seed, f"c2-{mid}", t_max=5.0))
        rows[mid] = rep.as_dict()
        ok &= rep.all_pass
        worst_i, worst_r = max(worst_i, rep.worst_inverse_ratio), max(worst_r, rep.worst_roundtrip_ratio)
    passed = sum(r["n_pass"] for r in rows.values())
    total = sum(r["n_paths"] for r in rows.values())
    s = (f"{passed}/{total} paths on {len(rows)} models; worst |L(T(s))-s| at {worst_i:.2g} of 2h sup f, "
         f"worst |U(Y)-X| at {worst_r:.2g} of 5x one-step displacement")
    return CriterionResult(2, "clock identities", ok, s, rows)


def criterion_radial(scale: Scale, seed: int) -> CriterionResult:
    out = {}
    for p in (3.0, 2.0):
        out[f"p={p:g}"] = radial_experiment(p, 1.0, scale.n_radial, _cfg(seed, f"c3-{p}", t_max=50.0))
    e, c = out["p=3"], out["p=2"]
    ok = (e["fraction"] >= 0.95 and e["analytic"]["outcome"] == Outcome.EXPLOSIVE.value
          and c["fraction"] <= 0.05 and c["analytic"]["outcome"] == Outcome.CONSERVATIVE.value)
    s = (f"(1+r)^3: fraction {e['fraction']:.3f} (>= 0.95), analytic {e['analytic']['outcome']}; "
         f"(1+r)^2: fraction {c['fraction']:.3f} (<= 0.05), analytic {c['analytic']['outcome']}")
    return CriterionResult(3, "radial dichotomy", ok, s, out)


def criterion_dichotomy(scale: Scale, seed: int) -> CriterionResult:
    fu = build_model("fuchsian:g=quartic")
    v1 = dichotomy_verdict(fu.field, fu.x0, scale.n_dichotomy, _cfg(seed, "c4-fuchsian"))
    bd = build_model("bmdrift")
    v2 = dichotomy_verdict(bd.field, bd.x0, scale.n_dichotomy, _cfg(seed, "c4-bmdrift"))
    perp = v2.get("route details").value["perpetual"]
    div_frac = perp["divergent"] / perp["n_paths"]
    routes = [v1.evidence[i].value for i in range(3)]
    ok = (v1.outcome is Outcome.ABSOLUTELY_CONTINUOUS and not v1.flags
          and v2.outcome is Outcome.SINGULAR and div_frac >= 0.98)
    s = (f"Fuchsian pair {v1.outcome.value} (routes {routes[0]:.3f}, {routes[1]:.3f}, {routes[2]:.3f}"
         f"{', ' + ','.join(v1.flags) if v1.flags else ''}); "
         f"BM vs drift {v2.outcome.value}, A_theta divergent on {div_frac:.3f} (>= 0.98)")
    return CriterionResult(4, "three-route dichotomy", ok, s, {"fuchsian": v1.as_dict(), "bmdrift": v2.as_dict()})


def power_law_spec(alpha: float, beta: float) -> IntegralTestSpec:
    A = ScalarField.profile(lambda u: u ** alpha, f"u^{alpha:g}")
    B = ScalarField.profile(lambda u: beta / u, f"{beta:g}/u")
    return IntegralTestSpec(A, B, 1.0)


def criterion_khasminskii(scale: Scale, seed: int) -> CriterionResult:
    rows = []
    right = wrong = undetermined = 0
    for alpha, beta, finite in POWER_LAW_CASES:
        tri, _, _ = nested_integral_converges(power_law_spec(alpha, beta))
        if tri is Tri.UNDETERMINED:
            undetermined += 1
        elif (tri is Tri.YES) == finite:
            right += 1
        else:
            wrong += 1
        rows.append({"alpha": alpha, "beta": beta, "expected_finite": finite, "classifier": tri.value})
    n = len(POWER_LAW_CASES)
    ok = wrong == 0 and right >= n - 1
    s = f"{right}/{n} match, {undetermined} undetermined, {wrong} wrong"
    return CriterionResult(5, "nested-integral classifier", ok, s, {"cases": rows})


def criterion_feller(scale: Scale, seed: int) -> CriterionResult:
    models = [build_model(mid) for mid in FELLER_IDS]
    rows = feller_vs_mc(models, scale.n_feller, _cfg(seed, "c6", t_max=20.0))
    decided = [r for r in rows if r["agree"] is not None]
    ok = len(rows) >= 4 and all(r["agree"] for r in decided)
    s = "; ".join(f"{r['model'].split('=')[1]}: {r['analytic']} / {r['mc_fraction']:.3f}" for r in rows)
    return CriterionResult(6, "Feller test vs Monte Carlo", ok,
                           f"{sum(bool(r['agree']) for r in decided)}/{len(decided)} decided agree ({s})",
                           {"rows": rows})


def criterion_market(scale: Scale, seed: int) -> CriterionResult:
    mk = scalar_market(lambda x: np.ones_like(x), name="a=1")
    curve = expected_price_curve(mk, (1.0, 5.0, 20.0, 50.0), scale.n_market, _cfg(seed, "c7-curve"))
    rows = curve.as_rows()
    within = all(abs(r["numeraire_mean"] - 1.0) <= 3 * r["numeraire_se"] + 1e-12 for r in rows if r["t"] <= 20)
    plain_within = [abs(r["plain_mean"] - 1.0) <= 3 * r["plain_se"] for r in rows if r["t"] <= 20]
    med50 = rows[-1]["plain_median"]
    v = martingale_measure_check(mk, min(scale.n_market, 1000), _cfg(seed, "c7-check"))
    aux = v.get("auxiliary explosion fraction").value
    m1 = one_dim_mart_criterion(lambda x: np.ones_like(x)).outcome.value
    m2 = one_dim_mart_criterion(lambda x: 1.0 + x * x).outcome.value
    ok = within and med50 < 0.01 and aux <= 0.02 and v.outcome is Outcome.NOT_UI and m1 == "Martingale" \
        and m2 == "StrictLocal"
    means = ", ".join(f"{r['numeraire_mean']:.3f}" for r in rows[:3])
    s = (f"E[S_t] at t=1,5,20: {means} "
         f"(numeraire estimator, within 3 SE: {within}; plain MC within 3 SE: {plain_within}); "
         f"median S_50={med50:.2e}; auxiliary explosion {aux:.3f}; verdict {v.outcome.value}; "
         f"a=1 {m1}, a=1+x^2 {m2}")
    return CriterionResult(7, "market", ok, s, {"curve": rows, "verdict": v.as_dict(), "a=1": m1, "a=1+x^2": m2})


def criterion_counterexample(scale: Scale, seed: int) -> CriterionResult:
    rho = ScalarField.profile(lambda t: 1.0 + t, "1+t")
    out = counterexample_experiment(rho, 3, [2, 3, 4, 5, 6], scale.n_counterexample, _cfg(seed, "c8", t_max=50.0))
    frac = out["explosion"]["p_hat"]
    ok = out["bound_ok"] and out["n_probe"] >= 10_000 and frac >= 0.9 and out["partial_sums_increasing"]
    s = (f"bound min ratio {out['bound_min_ratio']:.4f} (>= 1) on {out['n_probe']} points; "
         f"explosion fraction {frac:.3f} (>= 0.9); partial sums "
         f"{', '.join(f'{v:.3g}' for v in out['partial_sums'])}")
    return CriterionResult(8, "growth counterexample", ok, s, out)


CRITERIA: tuple = (
    criterion_timechange_law, criterion_clock_identities, criterion_radial, criterion_dichotomy,
    criterion_khasminskii, criterion_feller, criterion_market, criterion_counterexample,
)


def run_criteria(scale: Scale, seed: int, numbers=None, echo: Optional[Callable[[str], None]] = None) -> list:
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        if numbers is not None and i not in numbers:
            continue
        t0 = time.perf_counter()
        res = fn(scale, seed)
        res.runtime_s = time.perf_counter() - t0
        if echo:
            echo(res.line())
        out.append(res)
    return out


def criterion_determinism(seed: int, run_quick: Callable[[], dict]) -> CriterionResult:
    """Two quick runs from the same master seed must agree exactly (timing excluded)."""
    t0 = time.perf_counter()
    a, b = run_quick(), run_quick()
    same = a == b
    diff = [] if same else sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    res = CriterionResult(9, "determinism", same,
                          "identical results.json for two quick runs" if same else f"differences in {diff}",
                          {"differing_keys": diff})
    res.runtime_s = time.perf_counter() - t0
    return res
