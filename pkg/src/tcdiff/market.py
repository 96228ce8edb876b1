"""Discounted prices driven by a driftless martingale problem.

Under ``Q = MP(a, 0)`` the i-th price is
``S^i = exp(X^i - x0^i - 1/2 int a_ii(X) ds)``.  It is the Girsanov density
of the pair ``(a, b = a e_i, c = -e_i)``, so ``S^i`` is a uniformly
integrable Q-martingale iff the auxiliary ``MP(a/a_ii, a e_i/a_ii)``
explodes.  In one dimension that auxiliary problem is always ``MP(1, 1)``,
so ``S`` is never UI there; it is still a true martingale iff
``int_0^inf dx / a(x) = inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .coeffs import CoefficientField, profile_fn, shell_points, zero_drift
from .girsanov import UIVerdict, ladder_rows, ui_martingale_check
from .quadrature import QuadratureConfig, TailResult, Tri, classify_plain
from .sde import PathStatus, SimConfig, iter_path_chunks, simulate_path, summarize_statuses
from .verdict import Outcome, Verdict

BASE_EXPLOSION_LIMIT = 0.02


@dataclass(frozen=True)
class MarketSpec:
    """Diffusion field ``a`` (batched callable), start and 0-based asset index."""

    dim: int
    diffusion: Callable[[np.ndarray], np.ndarray]
    x0: tuple
    asset: int = 0
    name: str = "market"

    def __post_init__(self):
        if not 0 <= self.asset < self.dim:
            raise ValueError(f"asset index {self.asset} outside 0..{self.dim - 1}")
        if len(self.x0) != self.dim:
            raise ValueError("x0 has the wrong dimension")

    @property
    def e(self) -> np.ndarray:
        v = np.zeros(self.dim)
        v[self.asset] = 1.0
        return v

    def base_field(self) -> CoefficientField:
        """``Q = MP(a, 0)``."""
        return CoefficientField(self.dim, zero_drift(self.dim), self.diffusion, name=f"{self.name}:Q")

    def girsanov_field(self) -> CoefficientField:
        """``(a, a e_i, -e_i)``: its Q is the base field and its Z is ``S^i``."""
        i, e = self.asset, -self.e

        def drift(x):
            return np.asarray(self.diffusion(x), dtype=float)[:, :, i]

        return CoefficientField(self.dim, drift, self.diffusion, lambda x: np.broadcast_to(e, x.shape),
                                name=f"{self.name}:P{i}")

    def auxiliary_field(self) -> CoefficientField:
        """``MP(a/a_ii, a e_i/a_ii)``."""
        i = self.asset

        def diffusion(x):
            a = np.asarray(self.diffusion(x), dtype=float)
            return a / a[:, i, i][:, None, None]

        def drift(x):
            a = np.asarray(self.diffusion(x), dtype=float)
            return a[:, :, i] / a[:, i, i][:, None]

        return CoefficientField(self.dim, drift, diffusion, name=f"{self.name}:aux{i}")

    def validate(self, radii: Sequence[float] = (0.0, 1.0, 4.0, 16.0, 64.0), samples: int = 32) -> list:
        """Sampled check that ``a`` is symmetric positive definite; returns issues."""
        issues = []
        for r in radii:
            pts = shell_points(r, self.dim, samples)
            a = np.broadcast_to(np.asarray(self.diffusion(pts), dtype=float), (pts.shape[0], self.dim, self.dim))
            lam = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))[:, 0]
            if not np.all(np.isfinite(lam)) or lam.min() <= 0:
                j = int(np.argmin(np.where(np.isfinite(lam), lam, -np.inf)))
                issues.append(f"min eigenvalue {lam[j]:.3g} at {pts[j].tolist()}")
        return issues


@dataclass
class AssetPath:
    times: np.ndarray
    prices: np.ndarray
    status: PathStatus

    def price_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.atleast_1d(t), side="right") - 1
        return self.prices[idx]


def _log_price(spec: MarketSpec, times: np.ndarray, states: np.ndarray) -> np.ndarray:
    i = spec.asset
    a = np.asarray(spec.diffusion(states[:-1]), dtype=float)
    a = np.broadcast_to(a, (states.shape[0] - 1, spec.dim, spec.dim))
    qv = np.concatenate([[0.0], np.cumsum(a[:, i, i] * np.diff(times))])
    return states[:, i] - states[0, i] - 0.5 * qv


def simulate_asset(spec: MarketSpec, cfg: SimConfig) -> AssetPath:
    """``S^i`` along one Q-path; ``[X^i]`` is the left-point sum of ``a_ii``."""
    p = simulate_path(spec.base_field(), spec.x0, cfg)
    return AssetPath(p.times, np.exp(_log_price(spec, p.times, p.states)), p.status)


def price_samples(spec: MarketSpec, ladder: Sequence[float], n_paths: int, cfg: SimConfig) -> np.ndarray:
    """``(n_paths, len(ladder))`` array of ``S^i_t`` from plain Monte Carlo under Q."""
    ladder = sorted(float(t) for t in ladder)
    cfg = cfg.with_(t_max=ladder[-1], checkpoints=tuple(ladder), record=True)
    out = np.empty((n_paths, len(ladder)))
    k = 0
    for chunk in iter_path_chunks(spec.base_field(), spec.x0, cfg, n_paths):
        for p in chunk:
            lp = _log_price(spec, p.times, p.states)
            idx = np.searchsorted(p.times, ladder, side="right") - 1
            out[k] = np.exp(lp[idx])
            k += 1
    return out


@dataclass
class PriceCurve:
    """``E[S_t]`` along a ladder by two estimators.

    ``plain`` averages ``S_t`` over Q-paths.  ``numeraire`` uses
    ``E^Q[S_t] = P(theta > t)`` with ``P = MP(a, a e_i)`` the measure that
    has density ``S`` (the zero-variance importance sampler for ``S``); its
    standard error is binomial.
    """

    ladder: list
    plain: list
    numeraire_mean: list
    numeraire_se: list
    n_truncated: int

    def as_rows(self) -> list:
        return [{"t": t, "plain_mean": r.mean, "plain_se": r.se, "plain_median": r.median,
                 "numeraire_mean": m, "numeraire_se": s}
                for t, r, m, s in zip(self.ladder, self.plain, self.numeraire_mean, self.numeraire_se)]


def expected_price_curve(spec: MarketSpec, ladder: Sequence[float], n_paths: int, cfg: SimConfig) -> PriceCurve:
    ladder = sorted(float(t) for t in ladder)
    plain = ladder_rows(price_samples(spec, ladder, n_paths, cfg), ladder)
    theta = []
    nt = 0
    for chunk in iter_path_chunks(spec.girsanov_field(), spec.x0, cfg.with_(t_max=ladder[-1], record=False), n_paths):
        for p in chunk:
            if p.status is PathStatus.TRUNCATED:
                nt += 1
            else:
                theta.append(p.theta_hat)
    theta = np.asarray(theta)
    n = max(theta.size, 1)
    means = [float(np.mean(theta > t)) for t in ladder]
    ses = [math.sqrt(m * (1 - m) / n) for m in means]
    return PriceCurve(ladder, plain, means, ses, nt)


class MartOutcome(enum.Enum):
    MARTINGALE = "Martingale"
    STRICT_LOCAL = "StrictLocal"
    UNDETERMINED = "Undetermined"


@dataclass
class MartResult:
    outcome: MartOutcome
    right: TailResult
    left: TailResult

    def as_dict(self) -> dict:
        def tail(r):
            return {"tri": r.tri.value, "value": r.value, "diagnostic": r.diagnostic}

        return {"outcome": self.outcome.value, "right_tail": tail(self.right), "left_tail": tail(self.left)}


def one_dim_mart_criterion(a, quad: QuadratureConfig = QuadratureConfig()) -> MartResult:
    """Classify ``int_0^inf dx/a(x)``: divergent means ``S`` is a martingale.

    The left tail ``int_{-inf}^0`` is reported too but does not enter the
    classification.
    """
    af = profile_fn(a)
    right = classify_plain(lambda z: -np.log(af(z)), 0.0, quad)
    left = classify_plain(lambda z: -np.log(af(-z)), 0.0, quad)
    out = {Tri.NO: MartOutcome.MARTINGALE, Tri.YES: MartOutcome.STRICT_LOCAL}.get(right.tri, MartOutcome.UNDETERMINED)
    return MartResult(out, right, left)


def martingale_measure_check(spec: MarketSpec, n_paths: int, cfg: Optional[SimConfig] = None,
                             ladder: Sequence[float] = (1.0, 5.0, 20.0, 50.0)) -> Verdict:
    """Is ``S^i`` a uniformly integrable Q-martingale?

    Route one: explosion fraction of the auxiliary diffusion.  Route two: the
    UI diagnostics of ``S^i`` viewed as a Girsanov density.  The check is
    refused when the base ``MP(a, 0)`` itself explodes on more than 2% of
    paths, since the equivalence presumes a conservative base.
    """
    cfg = cfg or SimConfig()
    issues = spec.validate()
    if issues:
        raise ValueError(f"diffusion not positive definite: {issues[0]}")
    v = Verdict(Outcome.INCONCLUSIVE)
    base = summarize_statuses([p for ch in iter_path_chunks(spec.base_field(), spec.x0, cfg.with_(record=False), n_paths)
                               for p in ch])
    v.add("base explosion fraction", base.p_hat, BASE_EXPLOSION_LIMIT)
    if not base.p_hat <= BASE_EXPLOSION_LIMIT:
        v.flags.append("base-not-conservative")
        return v
    aux = summarize_statuses([p for ch in iter_path_chunks(spec.auxiliary_field(), spec.x0, cfg.with_(record=False),
                                                           n_paths) for p in ch])
    v.add("auxiliary explosion fraction", aux.p_hat, list(aux.ci95), note=spec.auxiliary_field().name)
    ui = ui_martingale_check(spec.girsanov_field(), spec.x0, max(n_paths, 1000), ladder, cfg)
    v.add("ui check", ui.verdict, note=ui.diagnostic)
    v.add("ui ladder", [r.as_dict() for r in ui.rows])
    if aux.p_hat >= 0.95:
        route = Outcome.UI_MARTINGALE
    elif aux.p_hat <= 0.05:
        route = Outcome.NOT_UI
    else:
        v.flags.append("auxiliary-undecided")
        return v
    if (route is Outcome.UI_MARTINGALE and ui.verdict is UIVerdict.NOT_UI or
            route is Outcome.NOT_UI and ui.verdict is UIVerdict.UI_PLAUSIBLE):
        v.flags.append("route-disagreement")
        return v
    if ui.verdict is UIVerdict.UNDETERMINED:
        v.flags.append("ui-check-undetermined")
    v.outcome = route
    return v


def diagonal_market(profile: Callable[[np.ndarray], np.ndarray], dim: int, x0=None, asset: int = 0,
                    name: str = "diag") -> MarketSpec:
    """``a = diag(profile(|x|), 1, ..., 1)`` with the profile on the asset's slot."""

    def diffusion(x):
        r = np.linalg.norm(x, axis=1)
        out = np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy()
        out[:, asset, asset] = profile(r)
        return out

    return MarketSpec(dim, diffusion, tuple(x0 if x0 is not None else [0.0] * dim), asset, name)


def scalar_market(a, x0: float = 0.0, name: str = "1d") -> MarketSpec:
    af = profile_fn(a)
    return MarketSpec(1, lambda x: af(x[:, 0])[:, None, None], (float(x0),), 0, name)
