"""Convergence classification of improper integrals on ``[lo, inf)``.

The half-line is cut into ``[lo, lo + w0]`` and doubling intervals
``[lo + w0 2^k, lo + w0 2^{k+1}]``.  Each interval is integrated on a
geometric grid by a rule that is exact for exponentials (the log of the
integrand is taken linear on each step), refined by grid doubling and
corrected by one Richardson step.  The sequence of interval
contributions is then read as a tail:

* YES  -- ``consecutive`` successive ratios at most ``decay_ratio_threshold``
  and the geometric tail bound below ``max(abs_tol, rel_tol * partial)``;
* NO   -- ``consecutive`` successive ratios at least ``1 - 1e-6``;
* UNDETERMINED otherwise after ``doubling_max`` doublings.

Nested integrals ``int 1/C(z) int C(u)/A(u) du dz`` with
``C = exp(int B)`` are evaluated through the ratio of the inner integral to
``C(z)``, kept in log form, so huge ``C`` neither overflows nor cancels.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma, logsumexp, roots_jacobi

NONDECREASING_SLACK = 1e-6


class Tri(enum.Enum):
    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    doubling_start: float = 1.0
    doubling_max: int = 60
    decay_ratio_threshold: float = 0.75
    consecutive: int = 4
    points: int = 65
    max_refine: int = 7
    angular_nodes: int = 26
    angular_tol: float = 0.05

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.doubling_max < 8:
            raise ValueError("doubling_max must be >= 8")
        if not 0 < self.decay_ratio_threshold < 1:
            raise ValueError("decay_ratio_threshold must lie in (0, 1)")
        if not self.doubling_start > 0:
            raise ValueError("doubling_start must be positive")


@dataclass
class TailResult:
    tri: Tri
    value: float  # partial sum (a lower bound when NO), inf-free
    log_contributions: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    tail_bound: float = math.nan
    diagnostic: str = ""

    @property
    def partial_values(self) -> list:
        return list(np.cumsum(np.exp(self.log_contributions)))


def _grid(a: float, b: float, lo: float, n: int) -> np.ndarray:
    if a == lo:
        return np.linspace(a, b, n)
    return lo + np.geomspace(a - lo, b - lo, n)


def _log_psi(x: np.ndarray) -> np.ndarray:
    """``log((1 - exp(-x)) / x)``, stable for all real ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    xs = x[small]
    out[small] = -xs / 2 + xs * xs / 24
    pos = x >= 1e-6
    xp = x[pos]
    out[pos] = np.log(-np.expm1(-xp)) - np.log(xp)
    neg = x <= -1e-6
    y = -x[neg]
    out[neg] = y + np.log(-np.expm1(-y)) - np.log(y)
    return out


def _log_pieces(z: np.ndarray, logf: np.ndarray) -> np.ndarray:
    """Log of ``int_{z_i}^{z_{i+1}} exp(logf)`` with ``logf`` linear on each step.

    Exact for exponentials, second order for smooth integrands; a zero end
    value falls back to the trapezoid rule.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        dz = np.log(np.diff(z))
        lo, hi = logf[:-1], logf[1:]
        both = np.isfinite(lo) & np.isfinite(hi)
        out = np.logaddexp(lo, hi) + dz - math.log(2.0)
        out[both] = hi[both] + dz[both] + _log_psi(hi[both] - lo[both])
    return out


def _lae(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = a if a > b else b
    return m + math.log1p(math.exp(-abs(a - b)))


def _richardson(lt_coarse: float, lt_fine: float) -> tuple:
    """Extrapolated log value and relative error estimate from two sums."""
    if not np.isfinite(lt_fine):
        return lt_fine, 0.0 if lt_fine == -np.inf and lt_coarse == -np.inf else math.inf
    c = math.exp(lt_coarse - lt_fine) if np.isfinite(lt_coarse) else 0.0
    est = (4.0 - c) / 3.0
    err = abs(1.0 - c) / 3.0
    if est <= 0:
        return lt_fine, err
    return lt_fine + math.log(est), err / est


def _simpson_increments(B, z: np.ndarray) -> np.ndarray:
    mid = 0.5 * (z[1:] + z[:-1])
    bz = np.asarray(B(z), dtype=float)
    bm = np.asarray(B(mid), dtype=float)
    return np.diff(z) / 6.0 * (bz[:-1] + 4.0 * bm + bz[1:])


class _Plain:
    """``int_lo^inf exp(logf(z)) dz``."""

    def __init__(self, logf: Callable[[np.ndarray], np.ndarray]):
        self.logf = logf

    def initial(self):
        return None

    def interval(self, z: np.ndarray, state):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            lf = np.asarray(self.logf(z), dtype=float)
        return logsumexp(_log_pieces(z, lf)), None


class _Scale:
    """``int_lo^inf exp(-int_lo^z B) dz``."""

    def __init__(self, B):
        self.B = B

    def initial(self):
        return 0.0

    def interval(self, z: np.ndarray, state):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            l = state + np.concatenate([[0.0], np.cumsum(_simpson_increments(self.B, z))])
        return logsumexp(_log_pieces(z, -l)), float(l[-1])


class _Nested:
    """``int_lo^inf R(z) dz`` with ``R(z) = int_lo^z exp(l(u) - l(z)) / A(u) du``, ``l' = B``.

    ``R`` is advanced step by step using only the local increment of ``l``,
    so the size of ``l`` itself never enters.
    """

    def __init__(self, logA, B):
        self.logA, self.B = logA, B

    def initial(self):
        return -math.inf

    def interval(self, z: np.ndarray, state):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            dl = _simpson_increments(self.B, z)
            la = np.asarray(self.logA(z), dtype=float)
            dphi = dl - np.diff(la)
            lp = -la[1:] + np.log(np.diff(z)) + _log_psi(dphi)
        lr = np.empty(z.size)
        lr[0] = state
        cur = state
        for i, (d, p) in enumerate(zip(dl.tolist(), lp.tolist())):
            cur = _lae(cur - d, p)
            lr[i + 1] = cur
        return logsumexp(_log_pieces(z, lr)), float(lr[-1])


def _walk(kernel, lo: float, quad: QuadratureConfig) -> TailResult:
    w0 = quad.doubling_start
    bounds = [(lo, lo + w0)] + [(lo + w0 * 2.0 ** k, lo + w0 * 2.0 ** (k + 1)) for k in range(quad.doubling_max)]
    state = kernel.initial()
    logs, ratios = [], []
    run_dec = run_inc = 0
    log_total = -math.inf
    for idx, (a, b) in enumerate(bounds):
        n = quad.points
        z = _grid(a, b, lo, n)
        lt_prev, st_prev = kernel.interval(z, state)
        lc, err, st = lt_prev, math.inf, st_prev
        for _ in range(quad.max_refine):
            n = 2 * n - 1
            z = _grid(a, b, lo, n)
            lt, st = kernel.interval(z, state)
            lc, err = _richardson(lt_prev, lt)
            if err <= quad.rel_tol:
                break
            lt_prev = lt
        if not np.isfinite(lc) and lc != -np.inf:
            return TailResult(Tri.UNDETERMINED, _capped_exp(log_total), logs, ratios, math.nan,
                              f"non-finite contribution on [{a:g}, {b:g}] (overflow)")
        state = st
        logs.append(float(lc))
        # the running sum stays in the log domain: divergent contributions may exceed float range
        log_total = _lae(log_total, float(lc))
        if idx < 2:
            continue
        prev = logs[-2]
        if lc == -np.inf:
            r = 0.0
        elif prev == -np.inf:
            r = math.inf
        else:
            r = math.exp(min(lc - prev, 700.0))
        ratios.append(r)
        run_dec = run_dec + 1 if r <= quad.decay_ratio_threshold else 0
        run_inc = run_inc + 1 if r >= 1.0 - NONDECREASING_SLACK else 0
        if run_dec >= quad.consecutive:
            rmax = max(ratios[-quad.consecutive:])
            log_tail = lc + math.log(rmax / (1.0 - rmax)) if lc > -np.inf and rmax > 0 else -math.inf
            if log_tail < max(math.log(quad.abs_tol), math.log(quad.rel_tol) + log_total):
                tail = math.exp(log_tail) if log_tail > -math.inf else 0.0
                return TailResult(Tri.YES, _capped_exp(log_total) + tail, logs, ratios, tail, "geometric tail")
        if run_inc >= quad.consecutive:
            return TailResult(Tri.NO, _capped_exp(log_total), logs, ratios, math.inf, "non-decreasing contributions")
    rmax = max(ratios[-quad.consecutive:]) if ratios else math.nan
    return TailResult(Tri.UNDETERMINED, _capped_exp(log_total), logs, ratios, math.nan,
                      f"no decision after {quad.doubling_max} doublings (last ratios up to {rmax:.4g})")


def _capped_exp(log_value: float) -> float:
    """``exp`` clipped to the largest float, so reported partial sums stay finite."""
    if log_value == -math.inf:
        return 0.0
    return math.exp(log_value) if log_value < 709.0 else sys.float_info.max


def classify_plain(logf: Callable[[np.ndarray], np.ndarray], lo: float, quad: QuadratureConfig) -> TailResult:
    """Classify ``int_lo^inf exp(logf(z)) dz``."""
    return _walk(_Plain(logf), lo, quad)


def classify_nested(logA, B, lo: float, quad: QuadratureConfig) -> TailResult:
    """Classify ``int_lo^inf (1/C(z)) int_lo^z C(u)/A(u) du dz`` with ``C = exp(int B)``.

    The base point of ``C`` cancels, so it is not a parameter.
    """
    return _walk(_Nested(logA, B), lo, quad)


def classify_scale(B, lo: float, quad: QuadratureConfig) -> TailResult:
    """Classify ``int_lo^inf exp(-int_lo^z B) dz``."""
    return _walk(_Scale(B), lo, quad)


# --------------------------------------------------------------------------
# sphere rules
# --------------------------------------------------------------------------


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / gamma(d / 2)


def lebedev6():
    nodes = np.concatenate([np.eye(3), -np.eye(3)])
    return nodes, np.full(6, sphere_area(3) / 6)


def lebedev26():
    """Degree-7 rule: octahedron vertices, edge midpoints and cube corners."""
    vert = np.concatenate([np.eye(3), -np.eye(3)])
    edges = []
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (1, -1):
                for sj in (1, -1):
                    v = np.zeros(3)
                    v[i], v[j] = si, sj
                    edges.append(v / math.sqrt(2))
    corners = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]) / math.sqrt(3)
    nodes = np.concatenate([vert, np.array(edges), corners])
    w = np.concatenate([np.full(6, 1 / 21), np.full(12, 4 / 105), np.full(8, 9 / 280)])
    return nodes, w * sphere_area(3)


def product_sphere_rule(d: int, n: int):
    """Gauss-Jacobi product rule on S^{d-1} with ``n`` nodes per polar angle
    and ``2n`` equispaced azimuths; exact for polynomials of degree ``< 2n``."""
    if d < 2:
        raise ValueError("need d >= 2")
    phi = 2 * math.pi * (np.arange(2 * n) + 0.5) / (2 * n)
    nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    weights = np.full(2 * n, 2 * math.pi / (2 * n))
    for m in range(1, d - 1):
        # new polar angle with density sin^m; t = cos(theta)
        t, wt = roots_jacobi(n, (m - 1) / 2, (m - 1) / 2)
        s = np.sqrt(1 - t * t)
        nodes = np.concatenate([
            np.concatenate([np.repeat(s, len(nodes))[:, None] * np.tile(nodes, (n, 1)),
                            np.repeat(t, len(nodes))[:, None]], axis=1)
        ])
        weights = np.repeat(wt, len(weights)) * np.tile(weights, n)
    return nodes, weights


def sphere_rule(d: int, n_nodes: int):
    """Default rule: 26-point for d = 3, product rule otherwise."""
    if d == 3 and n_nodes == 26:
        return lebedev26()
    if d == 3 and n_nodes == 6:
        return lebedev6()
    return product_sphere_rule(d, _per_angle(d, n_nodes))


def _per_angle(d: int, n_nodes: int) -> int:
    return max(3, math.ceil((n_nodes / 2) ** (1 / (d - 1)) - 1e-9))


def coarse_sphere_rule(d: int, n_nodes: int):
    """A lower-degree companion rule used as an accuracy check."""
    if d == 3 and n_nodes == 26:
        return lebedev6()
    return product_sphere_rule(d, _per_angle(d, n_nodes) - 1)
