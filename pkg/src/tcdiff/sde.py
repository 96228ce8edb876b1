"""Euler-Maruyama simulation of martingale problems with explosion.

Paths are advanced in vectorised chunks.  The chunk layout is a function of
the path index only and every Gaussian increment is keyed by
``(seed, path_index, step_number)``, so a path comes out bit-identical no
matter how many workers run or in which order chunks finish.

Explosion is proxied: a path is declared exploded when it crosses a level
``>= r_exp`` and the last few level-to-level hitting-time increments are all
small.  Paths that run off to ``r_trunc`` without meeting that rule, or that
exhaust the step budget, are reported as truncated rather than guessed.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import rng
from .coeffs import CoefficientError, CoefficientField, symmetrized

EIG_CLAMP = 1e-12
EIG_FAIL = -1e-8


class PathStatus(enum.Enum):
    ALIVE = "alive"
    EXPLODED = "exploded"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class SimConfig:
    """Discretisation and stopping controls.

    ``h`` is the base step; the step actually taken at ``x`` is
    ``h * l**2 / (1 + |a(x)|_op + |b(x)| * l)`` with ``l = 1 + |x|``.  At the
    origin this is ``h / (1 + |a| + |b|)``; far out the step is relative, so
    both quartic diffusions and transient Brownian paths reach large radii
    in a number of steps logarithmic in the radius.
    """

    h: float = 0.01
    t_max: float = 50.0
    r_exp: float = 1e3
    r_trunc: float = 1e30
    level_radii: Optional[tuple] = None
    seed: int = 0
    path_index: int = 0
    increment_cap: float = 0.05
    summable_levels: int = 5
    max_step: float = math.inf
    max_steps: int = 200_000
    checkpoints: tuple = ()
    chunk_size: int = 256
    workers: int = 1
    record: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not (0 < self.r_exp < self.r_trunc):
            raise ValueError("need 0 < r_exp < r_trunc")
        if self.level_radii is not None:
            lv = np.asarray(self.level_radii, dtype=float)
            if lv.size == 0 or np.any(np.diff(lv) <= 0) or lv[0] <= 0:
                raise ValueError("level_radii must be positive and strictly increasing")
        if self.summable_levels < 1:
            raise ValueError("summable_levels must be >= 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")

    def levels(self) -> np.ndarray:
        if self.level_radii is not None:
            return np.asarray(self.level_radii, dtype=float)
        top = int(math.ceil(math.log2(self.r_trunc)))
        return 2.0 ** np.arange(0, top + 1)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    @property
    def rule(self) -> "ExplosionRule":
        return ExplosionRule(self.r_exp, self.increment_cap, self.summable_levels)


@dataclass(frozen=True)
class ExplosionRule:
    """Declare explosion at the first level ``>= r_exp`` reached after
    ``summable_levels`` consecutive level-to-level increments ``<= increment_cap``."""

    r_exp: float = 1e3
    increment_cap: float = 0.05
    summable_levels: int = 5

    def first_level(self, levels: np.ndarray, hits: np.ndarray) -> Optional[int]:
        k = self.summable_levels
        with np.errstate(invalid="ignore"):
            inc = np.diff(hits)
        for li in np.nonzero(levels >= self.r_exp)[0]:
            if li < k or not np.isfinite(hits[li]):
                continue
            if np.all(inc[li - k: li] <= self.increment_cap):
                return int(li)
        return None


@dataclass
class PathSample:
    """One simulated trajectory.

    ``hits[k]`` is the first grid time with ``|X| >= levels[k]`` (``inf`` if
    never reached).  ``theta_hat`` is finite only for exploded paths.
    """

    path_index: int
    times: np.ndarray
    states: np.ndarray
    status: PathStatus
    theta_hat: float
    levels: np.ndarray
    hits: np.ndarray
    reason: str = ""
    rule: ExplosionRule = ExplosionRule()

    @property
    def theta_n_hits(self) -> dict:
        return {float(lv): float(t) for lv, t in zip(self.levels, self.hits) if np.isfinite(t)}

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def x_end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def max_displacement(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(np.diff(self.states, axis=0), axis=1)))

    def state_at(self, t) -> np.ndarray:
        """Linear interpolation of the path; times past the end return the last state."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.dim))
        for j in range(self.dim):
            out[:, j] = np.interp(t, self.times, self.states[:, j])
        return out


def psd_sqrt(a: np.ndarray, x: np.ndarray):
    """Symmetric square roots of a batch of PSD matrices and their top eigenvalues.

    Eigenvalues below ``1e-12`` are clamped to zero; anything below
    ``-1e-8`` raises with the offending point.
    """
    a = symmetrized(a)
    d = a.shape[-1]
    diag = np.einsum("nii->ni", a)
    if d == 1 or not np.any(a - diag[:, :, None] * np.eye(d)):
        w, q = diag, None
    else:
        w, q = np.linalg.eigh(a)
    if np.any(w < EIG_FAIL):
        i = int(np.argmin(w.min(axis=1)))
        raise CoefficientError(f"diffusion has negative eigenvalue {w.min():.3e}", x[i])
    s = np.sqrt(np.where(w < EIG_CLAMP, 0.0, w))
    top = w.max(axis=1)
    if q is None:
        return s[:, :, None] * np.eye(d), top
    return np.einsum("nij,nj,nkj->nik", q, s, q), top


def _simulate_chunk(fld: CoefficientField, x0: np.ndarray, cfg: SimConfig, ids: np.ndarray) -> list:
    n, d = ids.size, fld.dim
    levels = cfg.levels()
    nl = levels.size
    x = np.broadcast_to(x0, (n, d)).astype(float).copy()
    t = np.zeros(n)
    hits = np.full((n, nl), np.inf)
    r0 = np.linalg.norm(x, axis=1)
    hits[r0[:, None] >= levels[None, :]] = 0.0
    status = np.zeros(n, dtype=np.int8)  # 0 running, 1 alive, 2 exploded, 3 truncated
    reason = np.empty(n, dtype=object)
    theta = np.full(n, np.inf)
    checkpoints = np.unique(np.asarray([c for c in cfg.checkpoints if 0 < c < cfg.t_max] + [cfg.t_max], dtype=float))
    rec_pos, rec_x, rec_t = [], [], []
    active = np.arange(n)
    exp_levels = np.nonzero(levels >= cfg.r_exp)[0]
    k = cfg.summable_levels
    step = 0
    while active.size:
        if step >= cfg.max_steps:
            status[active] = 3
            reason[active] = "step budget exhausted"
            break
        xa = x[active]
        b = fld.b_batch(xa)
        a = fld.a_batch(xa)
        if not (np.isfinite(b).all() and np.isfinite(a).all()):
            bad = ~(np.isfinite(b).all(axis=1) & np.isfinite(a).all(axis=(1, 2)))
            raise CoefficientError("non-finite coefficient", xa[int(np.argmax(bad))])
        sig, top = psd_sqrt(a, xa)
        ell = 1.0 + np.linalg.norm(xa, axis=1)
        hp = cfg.h * ell * ell / (1.0 + top + np.linalg.norm(b, axis=1) * ell)
        hp = np.minimum(hp, cfg.max_step)
        ta = t[active]
        nxt = checkpoints[np.searchsorted(checkpoints, ta, side="right").clip(max=checkpoints.size - 1)]
        clip = ta + hp >= nxt
        hp = np.where(clip, nxt - ta, hp)
        t_new = np.where(clip, nxt, ta + hp)
        xi = rng.normals(cfg.seed, ids[active], step, d)
        dx = b * hp[:, None] + np.einsum("nij,nj->ni", sig, xi) * np.sqrt(hp)[:, None]
        x_new = xa + dx
        if not np.isfinite(x_new).all():
            bad = ~np.isfinite(x_new).all(axis=1)
            raise CoefficientError("non-finite state after Euler step", xa[int(np.argmax(bad))])
        x[active] = x_new
        t[active] = t_new
        if cfg.record:
            rec_pos.append(active)
            rec_x.append(x_new)
            rec_t.append(t_new)
        r = np.linalg.norm(x_new, axis=1)
        new_hit = (r[:, None] >= levels[None, :]) & np.isinf(hits[active])
        if new_hit.any():
            h_sub = hits[active]
            h_sub[new_hit] = np.broadcast_to(t_new[:, None], new_hit.shape)[new_hit]
            hits[active] = h_sub
            # explosion rule at each freshly crossed level >= r_exp
            for li in exp_levels:
                fresh = new_hit[:, li]
                if not fresh.any() or li < k:
                    continue
                hh = h_sub[fresh][:, li - k: li + 1]
                ok = np.all(np.diff(hh, axis=1) <= cfg.increment_cap, axis=1)
                pos = active[fresh][ok]
                pos = pos[status[pos] == 0]
                status[pos] = 2
                theta[pos] = hits[pos, li]
                reason[pos] = f"summable increments at level {levels[li]:g}"
        running = status[active] == 0
        trunc = running & (r >= cfg.r_trunc)
        status[active[trunc]] = 3
        reason[active[trunc]] = "truncation radius reached"
        done_h = running & ~trunc & (t_new >= cfg.t_max)
        status[active[done_h]] = 1
        reason[active[done_h]] = "horizon reached"
        active = active[status[active] == 0]
        step += 1
    if cfg.record and rec_pos:
        pos = np.concatenate(rec_pos)
        order = np.argsort(pos, kind="stable")
        xs = np.concatenate(rec_x)[order]
        ts = np.concatenate(rec_t)[order]
        bounds = np.searchsorted(pos[order], np.arange(n + 1))
    out = []
    rule = cfg.rule
    names = {1: PathStatus.ALIVE, 2: PathStatus.EXPLODED, 3: PathStatus.TRUNCATED}
    for i in range(n):
        if cfg.record and rec_pos:
            lo, hi = bounds[i], bounds[i + 1]
            times = np.concatenate([[0.0], ts[lo:hi]])
            states = np.concatenate([x0[None, :], xs[lo:hi]])
        else:
            times = np.array([0.0, t[i]])
            states = np.stack([x0, x[i]])
        out.append(PathSample(int(ids[i]), times, states, names[int(status[i])], float(theta[i]),
                              levels, hits[i].copy(), str(reason[i]), rule))
    return out


def _chunks(cfg: SimConfig, n_paths: int, path_ids=None) -> list:
    if path_ids is None:
        ids = np.arange(cfg.path_index, cfg.path_index + n_paths, dtype=np.int64)
    else:
        ids = np.asarray(path_ids, dtype=np.int64)
        n_paths = ids.size
    return [ids[i: i + cfg.chunk_size] for i in range(0, n_paths, cfg.chunk_size)]


def iter_path_chunks(fld: CoefficientField, x0, cfg: SimConfig, n_paths: int,
                     path_ids: Optional[Sequence[int]] = None) -> Iterator[list]:
    """Yield lists of PathSamples chunk by chunk, in path-index order.

    ``path_ids`` replaces the contiguous range starting at ``cfg.path_index``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(fld.dim)
    chunks = _chunks(cfg, n_paths, path_ids)
    if cfg.workers == 1 or len(chunks) == 1:
        for ids in chunks:
            yield _simulate_chunk(fld, x0, cfg, ids)
        return
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        yield from pool.map(lambda ids: _simulate_chunk(fld, x0, cfg, ids), chunks)


def simulate_paths(fld: CoefficientField, x0, cfg: SimConfig, n_paths: int) -> list:
    out = []
    for chunk in iter_path_chunks(fld, x0, cfg, n_paths):
        out.extend(chunk)
    return out


def simulate_path(fld: CoefficientField, x0, cfg: SimConfig) -> PathSample:
    """Simulate the single path ``cfg.path_index``."""
    return simulate_paths(fld, x0, cfg.with_(chunk_size=1, workers=1), 1)[0]


@dataclass
class ExplosionEstimate:
    p_hat: float
    ci95: tuple
    n_paths: int
    n_exploded: int
    n_alive: int
    n_truncated: int
    inconclusive: bool
    theta_hat: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    def as_dict(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "ci95": list(self.ci95),
            "n_paths": self.n_paths,
            "n_exploded": self.n_exploded,
            "n_alive": self.n_alive,
            "n_truncated": self.n_truncated,
            "inconclusive": self.inconclusive,
        }


def wilson_ci(k: int, n: int) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return (float(ci.low), float(ci.high))


def summarize_statuses(paths: Sequence[PathSample]) -> ExplosionEstimate:
    st = [p.status for p in paths]
    ne = st.count(PathStatus.EXPLODED)
    na = st.count(PathStatus.ALIVE)
    nt = st.count(PathStatus.TRUNCATED)
    n = len(st)
    denom = n - nt
    p = ne / denom if denom else math.nan
    thetas = np.array([q.theta_hat for q in paths if q.status is PathStatus.EXPLODED])
    return ExplosionEstimate(p, wilson_ci(ne, denom), n, ne, na, nt, nt > 0.2 * n, thetas)


def estimate_explosion_prob(fld: CoefficientField, x0, n_paths: int, cfg: SimConfig) -> ExplosionEstimate:
    """Monte Carlo estimate of the explosion probability before ``cfg.t_max``.

    Truncated paths are excluded from the denominator and counted; more than
    20% truncation marks the estimate inconclusive.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    cfg = cfg.with_(record=False)
    est = summarize_statuses(simulate_paths(fld, x0, cfg, n_paths))
    if est.n_truncated:
        warnings.warn(f"{est.n_truncated} of {n_paths} paths truncated and excluded", stacklevel=2)
    return est


def martingale_defect(fld: CoefficientField, x0, test_fn: Callable, n_paths: int,
                      t_checkpoints: Sequence[float], cfg: SimConfig) -> list:
    """Mean and standard error of ``u(X_t) - u(x0) - int_0^t Ku(X_s) ds``.

    ``test_fn`` maps an ``(n, d)`` batch to ``(values, gradients, hessians)``.
    Paths are stopped where the simulation stopped them; the compensator uses
    the left-point rule on the simulation grid, which contains every
    checkpoint exactly.
    """
    t_checkpoints = [float(t) for t in t_checkpoints]
    cps = tuple(sorted(set(cfg.checkpoints) | set(t_checkpoints)))
    cfg = cfg.with_(checkpoints=cps, record=True, t_max=max(cfg.t_max, max(t_checkpoints)))
    x0 = np.asarray(x0, dtype=float).reshape(fld.dim)
    u0 = test_fn(x0[None, :])[0][0]
    vals = np.empty((n_paths, len(t_checkpoints)))
    row = 0
    for chunk in iter_path_chunks(fld, x0, cfg, n_paths):
        for p in chunk:
            u, g, hess = test_fn(p.states)
            b = fld.b_batch(p.states)
            a = fld.a_batch(p.states)
            ku = np.einsum("ni,ni->n", g, b) + 0.5 * np.einsum("nij,nji->n", hess, a)
            comp = np.concatenate([[0.0], np.cumsum(ku[:-1] * np.diff(p.times))])
            idx = np.searchsorted(p.times, t_checkpoints, side="right") - 1
            vals[row] = u[idx] - u0 - comp[idx]
            row += 1
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
    return [(t, float(m), float(s)) for t, m, s in zip(t_checkpoints, mean, se)]
