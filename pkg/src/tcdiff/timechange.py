"""Random time change along simulated paths.

For a path ``X`` and a positive ``f`` the clock is ``T_t = int_0^t f(X_s) ds``,
``L`` is its right-continuous inverse, ``Y_u = X_{L_u}`` and the recovery
``U`` runs ``Y`` on the inverse of ``S_u = int_0^u 1/f(Y_v) dv``.  Everything
is computed on the simulation grid by the trapezoid rule; ``S`` uses the
reciprocal of the trapezoid mean so that on grid points shared with ``X``
the round trip is exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coeffs import CoefficientError, ScalarField
from .sde import ExplosionRule, PathSample, PathStatus

Y_GRID_MAX = 20_000


class ClockKind(enum.Enum):
    FINITE = "finite"
    DIVERGENT = "censored-divergent"
    CENSORED = "censored"


@dataclass
class Clock:
    """Clock values on the path grid.

    ``total`` is the estimate of ``T_theta``: finite for FINITE clocks,
    ``inf`` for DIVERGENT ones and the last value (a lower bound) for
    CENSORED ones.
    """

    times: np.ndarray
    values: np.ndarray
    total: float
    kind: ClockKind
    biased_low: bool = False
    level_index: Optional[int] = None

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def t_end(self) -> float:
        return float(self.values[-1])


def _f_on_states(f: ScalarField, states: np.ndarray) -> np.ndarray:
    v = f.values(states)
    bad = ~np.isfinite(v) | ~(v > 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise CoefficientError(f"clock density {f.name} evaluated to {v[i]!r}", states[i])
    return v


def _trapezoid(times: np.ndarray, fv: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * (fv[1:] + fv[:-1]) * np.diff(times))])


def additive_functional(path: PathSample, f: ScalarField, rule: Optional[ExplosionRule] = None) -> Clock:
    """Trapezoid clock ``T`` along the path with a classification of ``T_theta``.

    The clock images of the level hitting times are the hitting times of the
    time-changed path, so the same summability rule that declares ``X``
    exploded decides whether ``T_theta`` is finite.  Otherwise an alive path
    whose clock grew at least as much over the second half of the horizon as
    over the first is labelled censored-divergent; everything else is
    censored at its last value.
    """
    rule = rule or path.rule
    fv = _f_on_states(f, path.states)
    vals = _trapezoid(path.times, fv)
    t_hits = np.where(np.isfinite(path.hits), np.interp(np.where(np.isfinite(path.hits), path.hits, 0.0),
                                                          path.times, vals), np.inf)
    li = rule.first_level(path.levels, t_hits)
    truncated = path.status is PathStatus.TRUNCATED
    if li is not None:
        return Clock(path.times, vals, float(t_hits[li]), ClockKind.FINITE, False, li)
    if path.status is PathStatus.ALIVE:
        half = float(np.interp(0.5 * path.t_end, path.times, vals))
        if vals[-1] - half >= half * (1 - 1e-9):
            return Clock(path.times, vals, math.inf, ClockKind.DIVERGENT)
    elif path.status is PathStatus.EXPLODED:
        fin = np.isfinite(t_hits)
        inc = np.diff(t_hits[fin])[-rule.summable_levels:]
        if inc.size == rule.summable_levels and np.all(np.diff(inc) >= 0):
            return Clock(path.times, vals, math.inf, ClockKind.DIVERGENT)
    return Clock(path.times, vals, float(vals[-1]), ClockKind.CENSORED, truncated)


def invert_clock(clock: Clock):
    """Right-continuous inverse ``L(u) = inf{s : T_s > u}``.

    Returns a vectorised callable; ``L(u) = inf`` for ``u`` at or beyond the
    last clock value (or beyond a finite total).
    """
    t, v = clock.times, clock.values
    top = min(float(v[-1]), clock.total)

    def L(u):
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        j = np.searchsorted(v, u, side="right")
        out = np.full(u.shape, np.inf)
        ok = (j >= 1) & (j < v.size) & (u < top)
        jj = j[ok]
        dv = v[jj] - v[jj - 1]
        frac = np.where(dv > 0, (u[ok] - v[jj - 1]) / np.where(dv > 0, dv, 1.0), 1.0)
        out[ok] = t[jj - 1] + frac * (t[jj] - t[jj - 1])
        neg = u < v[0]
        out[neg] = t[0]
        return float(out[0]) if scalar else out

    return L


@dataclass
class TimeChangeResult:
    clock: Clock
    inverse: object
    y_path: PathSample
    total_T_theta: float

    @property
    def finite(self) -> bool:
        return self.clock.kind is ClockKind.FINITE


def time_change_path(path: PathSample, f: ScalarField, h: Optional[float] = None,
                     rule: Optional[ExplosionRule] = None) -> TimeChangeResult:
    """Sample ``Y_u = X_{L(u)}``.

    The Y grid is the union of the clock images of the X grid (where Y equals
    X exactly) and a uniform grid of step ``h`` (default: the median X step)
    capped at 20000 points.  If the clock is finite, Y is declared exploded at
    ``T_theta`` and its grid stops there.
    """
    clock = additive_functional(path, f, rule)
    L = invert_clock(clock)
    finite = clock.kind is ClockKind.FINITE
    u_end = clock.total if finite else clock.t_end
    if h is None:
        steps = np.diff(path.times)
        h = float(np.median(steps)) if steps.size else 1.0
    n_uni = int(min(Y_GRID_MAX, max(2, math.ceil(u_end / h) + 1))) if u_end > 0 else 1
    uni = np.linspace(0.0, u_end, n_uni)
    img = clock.values[clock.values <= u_end]
    u = np.union1d(uni, img)
    x_times = np.minimum(L(u[:-1]) if u.size > 1 else np.empty(0), path.t_end)
    # the right endpoint is the clock image of a grid point or T_theta itself
    s_last = path.t_end if not finite else float(np.interp(u_end, clock.values, clock.times))
    x_times = np.concatenate([x_times, [s_last]])
    # exact states where u is a clock image of a grid time
    states = path.state_at(x_times)
    idx = np.searchsorted(clock.values, u)
    hit = (idx < clock.values.size) & (clock.values[np.minimum(idx, clock.values.size - 1)] == u)
    states[hit] = path.states[idx[hit]]
    y_hits = np.where(np.isfinite(path.hits), np.interp(np.where(np.isfinite(path.hits), path.hits, 0.0),
                                                         clock.times, clock.values), np.inf)
    if finite:
        status, theta = PathStatus.EXPLODED, clock.total
    else:
        status = PathStatus.TRUNCATED if path.status is PathStatus.TRUNCATED else PathStatus.ALIVE
        theta = math.inf
    y = PathSample(path.path_index, u, states, status, theta, path.levels, y_hits,
                   f"time change of {path.status.value} path", rule or path.rule)
    return TimeChangeResult(clock, L, y, clock.total)


def recover_original(result: TimeChangeResult, f: ScalarField, times: Optional[np.ndarray] = None) -> PathSample:
    """``U_t = Y_{A_t}`` with ``A`` the inverse of ``S_u = int_0^u 1/f(Y_v) dv``.

    Sampled on ``times`` (default: the grid of the original path, recovered
    as the L-images of Y's clock-image points).
    """
    y = result.y_path
    fv = _f_on_states(f, y.states)
    du = np.diff(y.times)
    fbar = 0.5 * (fv[1:] + fv[:-1])
    # between consecutive clock images use the mean of f at those two knots,
    # the same mean the clock used, so S lands exactly on the grid times
    knots = result.clock.values[result.clock.values <= y.times[-1]]
    kpos = np.searchsorted(y.times, knots)
    exact = (kpos < y.times.size) & (y.times[np.minimum(kpos, y.times.size - 1)] == knots)
    knots, kpos = knots[exact], kpos[exact]
    if knots.size >= 2:
        mid = 0.5 * (y.times[1:] + y.times[:-1])
        k = np.searchsorted(knots, mid, side="right") - 1
        inside = (k >= 0) & (k < knots.size - 1)
        kk = k[inside]
        fbar[inside] = 0.5 * (fv[kpos[kk]] + fv[kpos[kk + 1]])
    s_vals = np.concatenate([[0.0], np.cumsum(du / fbar)])
    if times is None:
        times = result.clock.times
    times = np.asarray(times, dtype=float)
    times = times[times <= s_vals[-1] * (1 + 1e-12)]
    # S is strictly increasing, so A is plain interpolation
    a_t = np.interp(times, s_vals, y.times)
    states = y.state_at(a_t)
    theta = float(s_vals[-1]) if y.status is PathStatus.EXPLODED else math.inf
    r = np.linalg.norm(states, axis=1)
    crossed = r[:, None] >= y.levels[None, :]
    first = np.argmax(crossed, axis=0)
    hits = np.where(crossed.any(axis=0), times[first], np.inf)
    return PathSample(y.path_index, times, states, y.status, theta, y.levels, hits, "recovered", y.rule)


@dataclass
class PerpetualIntegral:
    value: float
    kind: ClockKind
    biased_low: bool

    @property
    def finite(self) -> bool:
        return self.kind is ClockKind.FINITE


def perpetual_integral(path: PathSample, f: ScalarField, rule: Optional[ExplosionRule] = None) -> PerpetualIntegral:
    """``int_0^theta f(X_s) ds`` with its classification.

    Censored values are lower bounds; truncated paths are flagged biased-low.
    """
    c = additive_functional(path, f, rule)
    return PerpetualIntegral(c.total, c.kind, c.biased_low or path.status is PathStatus.TRUNCATED)
