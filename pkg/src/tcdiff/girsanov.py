"""The Girsanov density between MP(a, b) and MP(a, b + ac).

Under ``Q = MP(a, b + ac)`` the density process is
``Z_t = exp(-int <c, dXbar> - 1/2 int <c, ac> ds)`` with
``Xbar = X - int (b + ac) ds``.  It is recomputed from a recorded Q-path:
on the Euler grid ``dXbar`` is exactly the noise part of each step, so the
stochastic integral uses left-point values and no extra random numbers.
After the path stops (explosion or truncation) ``Z`` is frozen.

Three independent routes decide absolute continuity versus singularity:
finiteness of ``A_theta = int <c, ac>(X) ds`` along P-paths, explosion of the
auxiliary MP(a/<c,ac>, b/<c,ac>), and the uniform integrability of ``Z``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coeffs import CoefficientField, ScalarField, probe_regularity, time_change_coeffs
from .sde import PathSample, PathStatus, SimConfig, iter_path_chunks, simulate_path, summarize_statuses, wilson_ci
from .timechange import ClockKind, perpetual_integral
from .verdict import Outcome, Verdict

LOG_Z_MAX = 700.0


@dataclass
class DensityPath:
    path: PathSample
    log_z: np.ndarray
    stoch_int: np.ndarray
    a_theta: np.ndarray
    overflow: bool = False

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def z_values(self) -> np.ndarray:
        return np.exp(self.log_z)

    @property
    def stopped_at(self) -> float:
        return self.path.t_end

    def log_z_at(self, t) -> np.ndarray:
        """``log Z`` at the given times, frozen after the path stops."""
        idx = np.searchsorted(self.path.times, np.atleast_1d(t), side="right") - 1
        return self.log_z[idx]


def density_from_path(fld: CoefficientField, path: PathSample) -> DensityPath:
    x = path.states[:-1]
    dt = np.diff(path.times)
    b = fld.b_batch(x)
    a = fld.a_batch(x)
    c = fld.c_batch(x)
    ac = np.einsum("nij,nj->ni", a, c)
    dxbar = np.diff(path.states, axis=0) - (b + ac) * dt[:, None]
    si = np.concatenate([[0.0], np.cumsum(np.einsum("ni,ni->n", c, dxbar))])
    at = np.concatenate([[0.0], np.cumsum(np.einsum("ni,ni->n", c, ac) * dt)])
    log_z = -si - 0.5 * at
    over = bool(np.any(log_z > LOG_Z_MAX))
    if over:
        log_z = np.minimum(log_z, LOG_Z_MAX)
    return DensityPath(path, log_z, si, at, over)


def simulate_density(fld: CoefficientField, x0, cfg: SimConfig) -> DensityPath:
    """Simulate X under Q and return the density along it."""
    return density_from_path(fld, simulate_path(fld.q_field(), x0, cfg))


def iter_densities(fld: CoefficientField, x0, cfg: SimConfig, n_paths: int):
    q = fld.q_field()
    for chunk in iter_path_chunks(q, x0, cfg.with_(record=True), n_paths):
        for p in chunk:
            yield density_from_path(fld, p)


# --------------------------------------------------------------------------
# uniform integrability
# --------------------------------------------------------------------------


class UIVerdict(enum.Enum):
    UI_PLAUSIBLE = "UI-plausible"
    NOT_UI = "NotUI"
    UNDETERMINED = "Undetermined"


@dataclass
class LadderRow:
    t: float
    mean: float
    se: float
    median: float
    top_share: float  # share of the sample sum carried by the top 1% of paths

    def as_dict(self) -> dict:
        return dict(t=self.t, mean=self.mean, se=self.se, median=self.median, top_share=self.top_share)


@dataclass
class UIReport:
    rows: list
    verdict: UIVerdict
    diagnostic: str
    n_paths: int
    n_exploded: int = 0
    n_truncated: int = 0

    @property
    def means(self) -> list:
        return [r.mean for r in self.rows]

    def as_dict(self) -> dict:
        return {"verdict": self.verdict.value, "diagnostic": self.diagnostic, "n_paths": self.n_paths,
                "n_exploded": self.n_exploded, "n_truncated": self.n_truncated,
                "ladder": [r.as_dict() for r in self.rows]}


def ladder_rows(samples: np.ndarray, ladder: Sequence[float]) -> list:
    """Summary rows from an ``(n_paths, len(ladder))`` array of terminal values."""
    n = samples.shape[0]
    k = max(1, int(math.ceil(0.01 * n)))
    rows = []
    for j, t in enumerate(ladder):
        z = samples[:, j]
        tot = z.sum()
        top = np.sort(z)[-k:].sum() / tot if tot > 0 else 1.0
        rows.append(LadderRow(float(t), float(z.mean()), float(z.std(ddof=1) / math.sqrt(n)),
                              float(np.median(z)), float(top)))
    return rows


def classify_ladder(rows: list) -> tuple:
    """Read a ladder of ``E[Z_T]`` summaries.

    NotUI evidence is checked first: growing concentration of the mean on
    the top 1% of paths, collapse of the median, or a monotone decay of the
    mean below ``1 - 3 SE``.  UI-plausible needs every mean within 3 SE of
    one, a stable top share and relative SE at most 20%.
    """
    first, last = rows[0], rows[-1]
    if last.top_share - first.top_share > 0.25 and last.top_share > 0.5:
        return UIVerdict.NOT_UI, (f"mean concentrates on the top 1% of paths "
                                  f"(share {first.top_share:.2f} -> {last.top_share:.2f})")
    if first.median > 0 and last.median < 0.1 and last.median < 0.5 * first.median:
        return UIVerdict.NOT_UI, f"median collapses ({first.median:.3g} -> {last.median:.3g})"
    means = [r.mean for r in rows]
    if all(m2 <= m1 for m1, m2 in zip(means, means[1:])) and last.mean < 1 - 3 * last.se:
        return UIVerdict.NOT_UI, f"mean decays to {last.mean:.4f} (< 1 - 3 SE)"
    rel_se = max(r.se / r.mean if r.mean > 0 else math.inf for r in rows)
    within = all(abs(r.mean - 1) <= 3 * r.se + 1e-12 for r in rows)
    stable = abs(last.top_share - first.top_share) <= 0.15
    if within and stable and rel_se <= 0.2:
        return UIVerdict.UI_PLAUSIBLE, "means within 3 SE of 1 and no escaping mass"
    if rel_se > 0.2:
        return UIVerdict.UNDETERMINED, (f"relative SE {rel_se:.2f} > 0.2: heavy tails; "
                                        "importance sampling of the tail paths is advised")
    return UIVerdict.UNDETERMINED, "ladder neither stable nor decaying"


def ui_martingale_check(fld: CoefficientField, x0, n_paths: int, horizon_ladder: Sequence[float],
                        cfg: Optional[SimConfig] = None) -> UIReport:
    """Test whether ``Z`` is a uniformly integrable Q-martingale."""
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    ladder = sorted(float(t) for t in horizon_ladder)
    cfg = (cfg or SimConfig()).with_(t_max=ladder[-1], checkpoints=tuple(ladder))
    if fld.girsanov is None:
        raise ValueError("field has no Girsanov direction")
    vals = np.empty((n_paths, len(ladder)))
    ne = nt = 0
    for i, dp in enumerate(iter_densities(fld, x0, cfg, n_paths)):
        vals[i] = np.exp(dp.log_z_at(ladder))
        ne += dp.path.status is PathStatus.EXPLODED
        nt += dp.path.status is PathStatus.TRUNCATED
    rows = ladder_rows(vals, ladder)
    verdict, diag = classify_ladder(rows)
    return UIReport(rows, verdict, diag, n_paths, ne, nt)


# --------------------------------------------------------------------------
# three routes
# --------------------------------------------------------------------------


@dataclass
class RouteEstimate:
    name: str
    estimate: float
    ci95: tuple
    detail: dict = field(default_factory=dict)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci95[1] - self.ci95[0])


def auxiliary_field(fld: CoefficientField) -> CoefficientField:
    """MP(a/<c,ac>, b/<c,ac>): the time change of P by the clock <c,ac>."""
    return time_change_coeffs(fld, fld.cac_field())


def route_perpetual(fld: CoefficientField, x0, n_paths: int, cfg: SimConfig,
                    long_horizon: float = 1e7) -> RouteEstimate:
    """Fraction of P-paths with finite ``A_theta``; censored paths count on neither side.

    Paths are classified on the horizons ``t_max``, ``8 t_max`` and
    ``long_horizon``; each path is re-run (bit-identically, being keyed by
    path index) until its clock is finite, or divergent on two consecutive
    horizons.  A late return towards a region where the clock is fast can
    mimic divergence on one horizon, rarely on two.
    """
    f = fld.cac_field()
    horizons = [cfg.t_max] + [h for h in (8 * cfg.t_max, long_horizon) if h > cfg.t_max]
    kinds, trunc, prev = {}, {}, {}
    pending = list(range(cfg.path_index, cfg.path_index + n_paths))
    for stage, hz in enumerate(horizons):
        last = stage == len(horizons) - 1
        nxt = []
        for chunk in iter_path_chunks(fld, x0, cfg.with_(t_max=hz), len(pending), pending):
            for p in chunk:
                k = perpetual_integral(p, f).kind
                i = p.path_index
                kinds[i], trunc[i] = k, p.status is PathStatus.TRUNCATED
                done = k is ClockKind.FINITE or (k is ClockKind.DIVERGENT and prev.get(i) is ClockKind.DIVERGENT)
                if not done and not last:
                    nxt.append(i)
                prev[i] = k
        if not nxt:
            break
        pending = nxt
    # a path divergent only on its final horizon stays unconfirmed
    fin = sum(k is ClockKind.FINITE for k in kinds.values())
    div = sum(k is ClockKind.DIVERGENT for k in kinds.values())
    denom = fin + div
    est = fin / denom if denom else math.nan
    return RouteEstimate("perpetual integral finite", est, wilson_ci(fin, denom),
                         {"finite": fin, "divergent": div, "censored": n_paths - denom,
                          "truncated": int(sum(trunc.values())), "horizons": horizons, "n_paths": n_paths})


def route_auxiliary(fld: CoefficientField, x0, n_paths: int, cfg: SimConfig) -> RouteEstimate:
    aux = auxiliary_field(fld)
    paths = []
    for chunk in iter_path_chunks(aux, x0, cfg.with_(record=False), n_paths):
        paths.extend(chunk)
    est = summarize_statuses(paths)
    return RouteEstimate("auxiliary explosion", est.p_hat, est.ci95, est.as_dict())


def route_ui(fld: CoefficientField, x0, n_paths: int, ladder: Sequence[float], cfg: SimConfig) -> RouteEstimate:
    rep = ui_martingale_check(fld, x0, n_paths, ladder, cfg)
    last = rep.rows[-1]
    ci = (last.mean - 1.96 * last.se, last.mean + 1.96 * last.se)
    return RouteEstimate("uniform integrability of Z", last.mean, ci, rep.as_dict())


@dataclass(frozen=True)
class DichotomyConfig:
    """Horizons of the three routes.

    The perpetual-integral route follows P-paths far out (finite integrals
    are recognised only once the path has crossed ``r_exp``), so it runs on
    a long horizon; divergence on alive paths is read off the clock.
    """

    perpetual_horizon: float = 1e7
    aux_horizon: float = 50.0
    ladder: tuple = (1.0, 5.0, 20.0, 50.0)
    high: float = 0.95
    low: float = 0.05


def _gap_ok(r1: RouteEstimate, r2: RouteEstimate) -> bool:
    return abs(r1.estimate - r2.estimate) <= math.hypot(r1.half_width, r2.half_width) + 1e-12


def dichotomy_verdict(fld: CoefficientField, x0, n_paths: int, cfg: Optional[SimConfig] = None,
                      dcfg: DichotomyConfig = DichotomyConfig()) -> Verdict:
    """Absolute continuity or singularity of P = MP(a, b) and Q = MP(a, b + ac) by three routes."""
    cfg = cfg or SimConfig()
    if fld.girsanov is None:
        raise ValueError("field has no Girsanov direction")
    d = fld.dim
    rep = probe_regularity(fld, [0.0, 0.5, 1.0, 2.0, 4.0, 8.0], 16 * d)
    if rep.cac_bounded_away_from_zero is False:
        raise ValueError(f"<c,ac> is not bounded away from zero: {rep.issues[:1]}")
    r1 = route_perpetual(fld, x0, n_paths, cfg.with_(t_max=dcfg.aux_horizon), dcfg.perpetual_horizon)
    r2 = route_auxiliary(fld, x0, n_paths, cfg.with_(t_max=dcfg.aux_horizon))
    r3 = route_ui(fld, x0, max(n_paths, 1000), dcfg.ladder, cfg)
    v = Verdict(Outcome.INCONCLUSIVE)
    for r in (r1, r2, r3):
        v.add(r.name, r.estimate, list(r.ci95), note=str(r.detail.get("verdict", "")))
    v.add("route details", {"perpetual": r1.detail, "auxiliary": r2.detail, "ui": r3.detail})
    ui = UIVerdict(r3.detail["verdict"])
    hi = r1.estimate >= dcfg.high and r2.estimate >= dcfg.high
    lo = r1.estimate <= dcfg.low and r2.estimate <= dcfg.low
    disagree = not _gap_ok(r1, r2) if not (math.isnan(r1.estimate) or math.isnan(r2.estimate)) else False
    if ui is UIVerdict.UI_PLAUSIBLE and lo or ui is UIVerdict.NOT_UI and hi:
        disagree = True
    if hi and ui is UIVerdict.UI_PLAUSIBLE:
        for r in (r1, r2):
            disagree |= not _gap_ok(r, r3)
    if disagree:
        v.flags.append("route-disagreement")
        return v
    if hi and ui is UIVerdict.UI_PLAUSIBLE:
        v.outcome = Outcome.ABSOLUTELY_CONTINUOUS
    elif lo and ui is not UIVerdict.UI_PLAUSIBLE:
        v.outcome = Outcome.SINGULAR
    return v


def time_changed_pair(fld: CoefficientField, f: ScalarField) -> CoefficientField:
    """The same pair after the time change by ``f``; ``c`` is kept so Q maps to Q."""
    return time_change_coeffs(fld, f)
