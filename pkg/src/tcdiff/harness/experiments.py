"""Experiments that tie the modules together and produce report dicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..analytic import FellerOutcome, feller_test_1d, radial_explosion_test
from .. import rng
from ..coeffs import (CoefficientField, ScalarField, build_counterexample_g, make_radial_field, probe_regularity,
                      profile_fn, time_change_coeffs)
from ..girsanov import dichotomy_verdict
from ..quadrature import QuadratureConfig
from ..sde import PathStatus, SimConfig, iter_path_chunks, summarize_statuses
from ..timechange import ClockKind, perpetual_integral, recover_original, time_change_path
from ..verdict import Outcome, Verdict
from .stats import EmpiricalLaw, ks_censored

LOW_POWER = 0.2


def explosion_verdict(fld: CoefficientField, x0, n_paths: int, cfg: SimConfig,
                      high: float = 0.95, low: float = 0.05) -> Verdict:
    paths = [p for ch in iter_path_chunks(fld, x0, cfg.with_(record=False), n_paths) for p in ch]
    est = summarize_statuses(paths)
    v = Verdict(Outcome.INCONCLUSIVE)
    v.add("explosion fraction", est.p_hat, [low, high], f"T_max={cfg.t_max:g}")
    v.add("counts", est.as_dict())
    if est.inconclusive:
        v.flags.append("truncation")
    elif est.p_hat >= high:
        v.outcome = Outcome.EXPLOSIVE
    elif est.p_hat <= low:
        v.outcome = Outcome.CONSERVATIVE
    return v


# --------------------------------------------------------------------------
# law of the perpetual integral vs law of the explosion time
# --------------------------------------------------------------------------


@dataclass
class TimeChangeLawReport:
    ks: object
    law_a: EmpiricalLaw
    law_b: EmpiricalLaw
    counts_a: dict
    counts_b: dict
    low_power: bool
    rows: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"ks": self.ks.as_dict(), "mean_a": self.law_a.mean_finite(), "mean_b": self.law_b.mean_finite(),
                "se_a": _se(self.law_a), "se_b": _se(self.law_b),
                "infinite_mass_a": self.law_a.infinite_mass, "infinite_mass_b": self.law_b.infinite_mass,
                "counts_a": self.counts_a, "counts_b": self.counts_b, "low_power": self.low_power}


def _se(law: EmpiricalLaw) -> float:
    s = law.samples
    return float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.nan


def verify_timechange_law(fld: CoefficientField, f: ScalarField, x0, n_paths: int, p_cfg: SimConfig,
                          q_cfg: Optional[SimConfig] = None) -> TimeChangeLawReport:
    """Law of ``int_0^theta f(X) ds`` under P against the explosion time of ``MP(a/f, b/f)``.

    Law A counts divergent clocks as infinite mass and keeps censored clocks
    as (biased-low) finite values.  Law B counts paths alive at the horizon,
    or truncated, as mass beyond the horizon.
    """
    q_cfg = q_cfg or p_cfg
    vals_a, rows = [], []
    ca = {k.value: 0 for k in ClockKind}
    ca["truncated"] = 0
    for ch in iter_path_chunks(fld, x0, p_cfg, n_paths):
        for p in ch:
            pi = perpetual_integral(p, f)
            ca[pi.kind.value] += 1
            ca["truncated"] += p.status is PathStatus.TRUNCATED
            vals_a.append(math.inf if pi.kind is ClockKind.DIVERGENT else pi.value)
            rows.append({"path_index": p.path_index, "status": p.status.value, "theta_hat": p.theta_hat,
                         "perpetual_value": vals_a[-1], "clock_kind": pi.kind.value})
    tc = time_change_coeffs(fld, f)
    vals_b = []
    cb = {s.value: 0 for s in PathStatus}
    for ch in iter_path_chunks(tc, x0, q_cfg.with_(record=False), n_paths):
        for p in ch:
            cb[p.status.value] += 1
            vals_b.append(p.theta_hat if p.status is PathStatus.EXPLODED else math.inf)
    law_a = EmpiricalLaw.from_values(vals_a)
    law_b = EmpiricalLaw.from_values(vals_b, q_cfg.t_max if math.isfinite(q_cfg.t_max) else None)
    low = (ca[ClockKind.CENSORED.value] / n_paths > LOW_POWER or
           (cb["alive"] + cb["truncated"]) / n_paths > LOW_POWER)
    return TimeChangeLawReport(ks_censored(law_a, law_b), law_a, law_b, ca, cb, low, rows)


# --------------------------------------------------------------------------
# pathwise clock identities
# --------------------------------------------------------------------------


@dataclass
class ClockIdentityReport:
    n_paths: int
    n_pass: int
    worst_inverse_ratio: float  # max |L(T(s)) - s| / (2 h sup f)
    worst_roundtrip_ratio: float  # max |U - X| / (5 * largest one-step displacement)
    theta_mismatch: int
    failures: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return self.n_pass == self.n_paths

    def as_dict(self) -> dict:
        return {"n_paths": self.n_paths, "n_pass": self.n_pass, "worst_inverse_ratio": self.worst_inverse_ratio,
                "worst_roundtrip_ratio": self.worst_roundtrip_ratio, "theta_mismatch": self.theta_mismatch,
                "failures": self.failures[:5]}


def path_clock_errors(path, f: ScalarField, h: float) -> tuple:
    """``(inverse error, its tolerance, round-trip error, its tolerance, theta ok)`` for one path."""
    tc = time_change_path(path, f)
    clock = tc.clock
    sup_f = float(np.max(f.values(path.states)))
    keep = clock.values < min(clock.total, clock.values[-1])
    s = path.times[keep]
    err_inv = float(np.max(np.abs(tc.inverse(clock.values[keep]) - s))) if s.size else 0.0
    u = recover_original(tc, f, path.times)
    x = path.states[: u.times.size]
    err_rt = float(np.max(np.linalg.norm(u.states - x, axis=1))) if x.size else 0.0
    step = float(np.max(np.linalg.norm(np.diff(path.states, axis=0), axis=1))) if path.times.size > 1 else 0.0
    theta_ok = (tc.y_path.theta_hat == tc.total_T_theta) if tc.finite else not math.isfinite(tc.y_path.theta_hat)
    return err_inv, 2.0 * h * sup_f, err_rt, 5.0 * step, bool(theta_ok)


def clock_identity_check(fld: CoefficientField, f: ScalarField, x0, n_paths: int, cfg: SimConfig) -> ClockIdentityReport:
    n_pass = mism = 0
    w_inv = w_rt = 0.0
    failures = []
    for ch in iter_path_chunks(fld, x0, cfg.with_(record=True), n_paths):
        for p in ch:
            ei, ti, er, tr, ok = path_clock_errors(p, f, cfg.h)
            ri = ei / ti if ti > 0 else (0.0 if ei == 0 else math.inf)
            rr = er / tr if tr > 0 else (0.0 if er == 0 else math.inf)
            w_inv, w_rt = max(w_inv, ri), max(w_rt, rr)
            mism += not ok
            if ri <= 1 and rr <= 1 and ok:
                n_pass += 1
            else:
                failures.append({"path_index": p.path_index, "inverse_ratio": ri, "roundtrip_ratio": rr})
    return ClockIdentityReport(n_paths, n_pass, w_inv, w_rt, mism, failures)


# --------------------------------------------------------------------------
# start independence
# --------------------------------------------------------------------------


@dataclass
class MultiStartReport:
    starts: list
    verdicts: list
    probes_ok: bool

    @property
    def agree(self) -> bool:
        return len({v.outcome for v in self.verdicts}) <= 1

    def as_dict(self) -> dict:
        return {"starts": [list(map(float, s)) for s in self.starts], "agree": self.agree,
                "probes_ok": self.probes_ok, "verdicts": [v.as_dict() for v in self.verdicts]}


def multi_start_experiment(fld: CoefficientField, starts: Sequence, n_paths: int, cfg: SimConfig) -> MultiStartReport:
    """The verdict at every start: the dichotomy when the field has a Girsanov
    direction, the explosion classification otherwise."""
    probes = probe_regularity(fld, [0.0, 1.0, 2.0, 4.0, 8.0], 8 * fld.dim)
    verdicts = []
    for x0 in starts:
        if fld.girsanov is not None:
            verdicts.append(dichotomy_verdict(fld, x0, n_paths, cfg))
        else:
            verdicts.append(explosion_verdict(fld, x0, n_paths, cfg))
    return MultiStartReport([np.asarray(s, dtype=float) for s in starts], verdicts, probes.ok)


# --------------------------------------------------------------------------
# the growth-sharpness counterexample
# --------------------------------------------------------------------------


def counterexample_probe_points(spec, n_points: int, seed: int = 7) -> np.ndarray:
    """Half the points inside the balls, half on log-spaced shells out to twice the last centre."""
    d = spec.d
    n_ball = n_points // 2
    u = rng.uniforms(seed, np.arange(n_points, dtype=np.int64), 0)
    z = rng.normals(seed, np.arange(n_points, dtype=np.int64), 1, d)
    dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    k = len(spec.centers)
    ball = np.arange(n_ball) % k
    c = np.asarray(spec.centers)[ball]
    r = np.asarray(spec.radii)[ball] * u[:n_ball, 0] ** (1.0 / d)
    inside = dirs[:n_ball] * r[:, None]
    inside[:, 0] += c
    top = 2.0 * spec.centers[-1]
    radii = np.expm1(u[n_ball:, 1] * math.log1p(top))
    outside = dirs[n_ball:] * radii[:, None]
    return np.vstack([inside, outside])


def counterexample_experiment(rho: ScalarField, d: int, n_balls_list: Sequence[int], n_paths: int,
                              cfg: SimConfig, n_probe: int = 10_000) -> dict:
    n_max = max(n_balls_list)
    spec, g = build_counterexample_g(rho, d, n_max)
    pts = counterexample_probe_points(spec, n_probe)
    r = np.linalg.norm(pts, axis=1)
    ratio = g.values(pts) * profile_fn(rho)(r) / (1.0 + r * r)
    terms = spec.lower_bound_terms()
    partial = [float(terms[:n].sum()) for n in n_balls_list]
    floors = spec.floor_terms()
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    fld = CoefficientField(d, lambda x: np.zeros_like(x), lambda x: g.values(x)[:, None, None] * np.eye(d),
                           name="counterexample")
    est = summarize_statuses([p for ch in iter_path_chunks(fld, np.zeros(d), cfg.with_(record=False), n_paths)
                              for p in ch])
    return {
        "centers": list(spec.centers), "radii": list(spec.radii), "min_gap": spec.min_gap(),
        "bound_min_ratio": float(ratio.min()), "bound_ok": bool(ratio.min() >= 1.0 - 1e-12), "n_probe": int(pts.shape[0]),
        "explosion": est.as_dict(),
        "n_balls": list(n_balls_list), "partial_sums": partial,
        "partial_sums_increasing": bool(all(b > a for a, b in zip(partial, partial[1:]))),
        "floor_terms": floors.tolist(),
        # rho(|x_n|/2) > 4^{dn} for n >= 2, so each floor term beats omega_d/5 (4/3)^{dn}
        "floor_ok": bool(all(floors[n - 1] >= omega / 5 * (4.0 / 3.0) ** (d * n) for n in range(2, n_max + 1))),
    }


# --------------------------------------------------------------------------
# analytic verdicts against Monte Carlo
# --------------------------------------------------------------------------


def feller_vs_mc(models: Sequence, n_paths: int, cfg: SimConfig, quad: QuadratureConfig = QuadratureConfig()) -> list:
    """One row per one-dimensional model: analytic tri-state, MC fraction and agreement."""
    rows = []
    for m in models:
        a, b = m.profiles
        res = feller_test_1d(a, b, float(m.x0[0]), quad)
        est = summarize_statuses([p for ch in iter_path_chunks(m.field, m.x0, cfg.with_(record=False), n_paths)
                                  for p in ch])
        if res.outcome is FellerOutcome.EXPLODES_AS:
            agree = est.p_hat >= 0.95
        elif res.outcome is FellerOutcome.CONSERVATIVE_AS:
            agree = est.p_hat <= 0.05
        else:
            agree = None
        rows.append({"model": m.id, "analytic": res.outcome.value, "diagnostic": res.diagnostic,
                     "mc_fraction": est.p_hat, "mc_ci95": list(est.ci95), "agree": agree})
    return rows


def radial_experiment(power: float, x0_norm: float, n_paths: int, cfg: SimConfig, d: int = 3,
                      quad: QuadratureConfig = QuadratureConfig()) -> dict:
    s = ScalarField.profile(lambda r: (1.0 + r) ** power, f"(1+r)^{power:g}")
    analytic = radial_explosion_test(s, x0_norm, quad, d)
    x0 = np.zeros(d)
    x0[0] = x0_norm
    mc = explosion_verdict(make_radial_field(s, d), x0, n_paths, cfg)
    return {"p": power, "analytic": analytic.as_dict(), "mc": mc.as_dict(),
            "fraction": mc.get("explosion fraction").value}
