"""Coefficient fields of martingale problems and probes of their regularity.

All fields are vectorised: callables receive an ``(n, d)`` array of points
and return ``(n,)`` scalars, ``(n, d)`` vectors or ``(n, d, d)`` matrices.
Convenience accessors accept a single point as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng

PSD_FLOOR = -1e-10


class CoefficientError(ValueError):
    """A coefficient evaluated to something unusable at a concrete point."""

    def __init__(self, message: str, point=None):
        self.point = None if point is None else np.asarray(point, dtype=float)
        if point is not None:
            message = f"{message} at x={np.array2string(self.point, precision=6)}"
        super().__init__(message)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an ``(n, dim)`` float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        if dim == 1:
            return x.reshape(-1, 1)
        if x.shape[0] != dim:
            raise ValueError(f"point of length {x.shape[0]} for a {dim}-dimensional field")
        return x.reshape(1, dim)
    if x.shape[1] != dim:
        raise ValueError(f"points of width {x.shape[1]} for a {dim}-dimensional field")
    return x


@dataclass(frozen=True)
class ScalarField:
    """A real function on R^dim.

    ``fn`` maps an ``(n, dim)`` array to ``(n,)`` values.  ``lower`` records a
    domain restriction (e.g. ``0.5`` for the envelopes of the Khasminskii
    test); the function itself stays total.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "scalar"
    lower: Optional[float] = None

    def __call__(self, x):
        pts = as_points(x, self.dim)
        out = np.asarray(self.fn(pts), dtype=float)
        out = np.broadcast_to(out, (pts.shape[0],)).copy() if out.ndim == 0 else out.reshape(pts.shape[0])
        x = np.asarray(x)
        if x.ndim == 0 or (x.ndim == 1 and self.dim > 1):
            return float(out[0])
        return out

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate on an ``(n, dim)`` batch without any shape inference."""
        out = np.asarray(self.fn(pts), dtype=float)
        if out.ndim == 0:
            return np.full(pts.shape[0], float(out))
        return out

    @classmethod
    def constant(cls, value: float, dim: int = 1, name: Optional[str] = None) -> "ScalarField":
        value = float(value)
        return cls(dim, lambda x: np.full(x.shape[0], value), name or f"const({value:g})")

    @classmethod
    def profile(cls, fn: Callable[[np.ndarray], np.ndarray], name: str = "profile",
                lower: Optional[float] = None) -> "ScalarField":
        """A function of one real variable, written elementwise."""
        return cls(1, lambda x: fn(x[:, 0]), name, lower)

    @classmethod
    def of_norm(cls, profile: Callable[[np.ndarray], np.ndarray], dim: int,
                name: str = "radial") -> "ScalarField":
        """``x -> profile(|x|)``."""
        return cls(dim, lambda x: profile(np.linalg.norm(x, axis=1)), name)

    def reciprocal(self) -> "ScalarField":
        fn = self.fn
        return ScalarField(self.dim, lambda x: 1.0 / np.asarray(fn(x), dtype=float), f"1/{self.name}", self.lower)

    def scaled(self, k: float) -> "ScalarField":
        fn = self.fn
        return ScalarField(self.dim, lambda x: k * np.asarray(fn(x), dtype=float), f"{k:g}*{self.name}", self.lower)


def profile_fn(s) -> Callable[[np.ndarray], np.ndarray]:
    """Elementwise callable for a 1-d ScalarField or a plain function."""
    if isinstance(s, ScalarField):
        if s.dim != 1:
            raise ValueError("expected a one-dimensional profile")
        return lambda r: s.values(np.asarray(r, dtype=float).reshape(-1, 1))
    return lambda r: np.asarray(s(np.asarray(r, dtype=float)), dtype=float) * np.ones_like(r, dtype=float)


@dataclass(frozen=True)
class CoefficientField:
    """Drift ``b``, diffusion ``a``, optional Girsanov direction ``c`` and clock ``f``."""

    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    girsanov: Optional[Callable[[np.ndarray], np.ndarray]] = None
    clock: Optional[ScalarField] = None
    name: str = "field"

    # batched evaluation -------------------------------------------------
    def b_batch(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.drift(x), dtype=float), x.shape)

    def a_batch(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(self.diffusion(x), dtype=float)
        return np.broadcast_to(a, (x.shape[0], self.dim, self.dim))

    def c_batch(self, x: np.ndarray) -> np.ndarray:
        if self.girsanov is None:
            raise ValueError(f"field {self.name!r} has no Girsanov direction")
        return np.broadcast_to(np.asarray(self.girsanov(x), dtype=float), x.shape)

    def cac_batch(self, x: np.ndarray) -> np.ndarray:
        c = self.c_batch(x)
        a = self.a_batch(x)
        return np.einsum("ni,nij,nj->n", c, a, c)

    # single-point or batch convenience -----------------------------------
    def b(self, x):
        pts = as_points(x, self.dim)
        out = self.b_batch(pts)
        return out[0].copy() if np.asarray(x).ndim <= 1 and pts.shape[0] == 1 else out

    def a(self, x):
        pts = as_points(x, self.dim)
        out = self.a_batch(pts)
        return out[0].copy() if np.asarray(x).ndim <= 1 and pts.shape[0] == 1 else out

    def c(self, x):
        pts = as_points(x, self.dim)
        out = self.c_batch(pts)
        return out[0].copy() if np.asarray(x).ndim <= 1 and pts.shape[0] == 1 else out

    def cac(self, x):
        pts = as_points(x, self.dim)
        out = self.cac_batch(pts)
        return float(out[0]) if np.asarray(x).ndim <= 1 and pts.shape[0] == 1 else out

    def cac_field(self) -> ScalarField:
        """``x -> <c(x), a(x) c(x)>`` as a ScalarField."""
        return ScalarField(self.dim, self.cac_batch, f"<c,ac>[{self.name}]")

    def with_drift(self, drift: Callable[[np.ndarray], np.ndarray], name: Optional[str] = None) -> "CoefficientField":
        return replace(self, drift=drift, name=name or self.name)

    def q_field(self) -> "CoefficientField":
        """The field of Q: same diffusion, drift ``b + a c``."""
        b, a, c = self.b_batch, self.a_batch, self.c_batch

        def drift(x):
            return b(x) + np.einsum("nij,nj->ni", a(x), c(x))

        return replace(self, drift=drift, name=f"Q[{self.name}]")


def identity_diffusion(dim: int, scale: Optional[Callable[[np.ndarray], np.ndarray]] = None):
    """``x -> scale(x) * Id`` as a batched callable (``scale`` defaults to 1)."""
    eye = np.eye(dim)

    def diffusion(x):
        if scale is None:
            return np.broadcast_to(eye, (x.shape[0], dim, dim))
        return np.asarray(scale(x), dtype=float)[:, None, None] * eye

    return diffusion


def zero_drift(dim: int):
    return lambda x: np.zeros((x.shape[0], dim))


def constant_vector(v: Sequence[float]):
    v = np.asarray(v, dtype=float)
    return lambda x: np.broadcast_to(v, (x.shape[0], v.shape[0]))


def time_change_coeffs(fld: CoefficientField, f: ScalarField) -> CoefficientField:
    """Coefficients ``(a/f, b/f)`` of the time-changed martingale problem.

    The Girsanov direction is carried over unchanged, so ``q_field`` of the
    result is the time change of ``q_field`` of the input.
    """
    if f.dim != fld.dim:
        raise ValueError("clock and field dimensions differ")
    fv = f.values

    def checked(x):
        v = fv(x)
        bad = ~(v > 0) | ~np.isfinite(v)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise CoefficientError(f"clock {f.name} is not strictly positive (value {v[i]!r})", x[i])
        return v

    b, a = fld.b_batch, fld.a_batch

    def drift(x):
        return b(x) / checked(x)[:, None]

    def diffusion(x):
        return a(x) / checked(x)[:, None, None]

    return CoefficientField(fld.dim, drift, diffusion, fld.girsanov, fld.clock, f"{fld.name}/{f.name}")


def generator_apply(fld: CoefficientField, hess_fn, x) -> float:
    """``<grad u(x), b(x)> + tr(hess u(x) a(x)) / 2`` for a C^2 test function.

    ``hess_fn(x)`` returns ``(value, gradient, hessian)`` of the test function.
    """
    x = np.asarray(x, dtype=float).reshape(fld.dim)
    _, grad, hess = hess_fn(x)
    grad = np.asarray(grad, dtype=float).reshape(fld.dim)
    hess = np.asarray(hess, dtype=float).reshape(fld.dim, fld.dim)
    return float(grad @ fld.b(x) + 0.5 * np.trace(hess @ fld.a(x)))


def make_radial_field(s, d: int) -> CoefficientField:
    """``a(x) = s(|x|) Id``, ``b = 0``."""
    prof = profile_fn(s)
    name = getattr(s, "name", "s")
    scale = lambda x: prof(np.linalg.norm(x, axis=1))
    return CoefficientField(d, zero_drift(d), identity_diffusion(d, scale), name=f"radial[{name}]")


# --------------------------------------------------------------------------
# regularity probes
# --------------------------------------------------------------------------


def shell_points(radius: float, dim: int, n: int, seed: int = 0x5EE11) -> np.ndarray:
    """``n`` deterministic points on the sphere of the given radius.

    Axis points come first so structures along coordinate axes are seen.
    """
    if radius == 0.0:
        return np.zeros((1, dim))
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    if n <= axes.shape[0]:
        dirs = axes[:n]
    else:
        z = rng.normals(seed, np.arange(n - axes.shape[0]), int(radius * 1e6) & 0xFFFFFFFF, dim)
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        dirs = np.concatenate([axes, z])
    return radius * dirs


def symmetrized(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass
class ShellStats:
    radius: float
    sup_b: float
    sup_a: float
    min_eig_a: float
    inf_cac: float = math.nan
    sup_cac: float = math.nan
    inf_f: float = math.nan
    sup_f: float = math.nan


@dataclass
class RegularityReport:
    shells: list
    locally_bounded: bool
    psd: bool
    a_bounded_away_from_zero: bool
    cac_bounded_away_from_zero: Optional[bool]
    clock_bounded_away_from_zero: Optional[bool]
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        flags = [self.locally_bounded, self.psd]
        flags += [f for f in (self.cac_bounded_away_from_zero, self.clock_bounded_away_from_zero) if f is not None]
        return all(flags)


def probe_regularity(fld: CoefficientField, radii: Sequence[float], samples_per_shell: int) -> RegularityReport:
    """Sample sup/inf of the coefficients on spheres of the given radii.

    This is a probe of local boundedness and of being bounded away from zero,
    not a certificate: only the sampled points are inspected.
    """
    radii = [float(r) for r in radii]
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    if samples_per_shell < 1:
        raise ValueError("samples_per_shell must be >= 1")
    shells, issues = [], []
    bounded = psd = a_pos = True
    cac_pos = True if fld.girsanov is not None else None
    f_pos = True if fld.clock is not None else None
    for r in radii:
        x = shell_points(r, fld.dim, samples_per_shell)
        with np.errstate(all="ignore"):
            b = fld.b_batch(x)
            a = fld.a_batch(x)
        st = ShellStats(r, math.nan, math.nan, math.nan)
        finite = np.isfinite(b).all(axis=1) & np.isfinite(a).all(axis=(1, 2))
        if not finite.all():
            bounded = False
            issues.append(("non-finite b or a", x[int(np.argmin(finite))].tolist()))
            shells.append(st)
            continue
        eig = np.linalg.eigvalsh(symmetrized(a))
        st.sup_b = float(np.max(np.linalg.norm(b, axis=1)))
        st.sup_a = float(np.max(np.abs(eig)))
        st.min_eig_a = float(np.min(eig))
        if st.min_eig_a < PSD_FLOOR:
            psd = False
            issues.append(("a not positive semi-definite", x[int(np.argmin(eig.min(axis=1)))].tolist()))
        if st.min_eig_a <= 0.0:
            a_pos = False
        if fld.girsanov is not None:
            with np.errstate(all="ignore"):
                cac = fld.cac_batch(x)
            if not np.isfinite(cac).all():
                bounded = False
                issues.append(("non-finite <c,ac>", x[int(np.argmin(np.isfinite(cac)))].tolist()))
            else:
                st.inf_cac, st.sup_cac = float(cac.min()), float(cac.max())
                if st.inf_cac <= 0.0:
                    cac_pos = False
                    issues.append(("<c,ac> not bounded away from zero", x[int(np.argmin(cac))].tolist()))
        if fld.clock is not None:
            with np.errstate(all="ignore"):
                fv = fld.clock.values(x)
            if not np.isfinite(fv).all():
                bounded = False
                issues.append(("non-finite clock", x[int(np.argmin(np.isfinite(fv)))].tolist()))
            else:
                st.inf_f, st.sup_f = float(fv.min()), float(fv.max())
                if st.inf_f <= 0.0:
                    f_pos = False
                    issues.append(("clock not positive", x[int(np.argmin(fv))].tolist()))
        shells.append(st)
    return RegularityReport(shells, bounded, psd, a_pos, cac_pos, f_pos, issues)


# --------------------------------------------------------------------------
# the counterexample of quadratic-growth sharpness
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CounterexampleSpec:
    rho: ScalarField
    d: int
    centers: tuple  # norms of x_n; x_n = centers[n-1] * e_1
    radii: tuple

    def center(self, n: int) -> np.ndarray:
        x = np.zeros(self.d)
        x[0] = self.centers[n - 1]
        return x

    def min_gap(self) -> float:
        """Smallest ``|x_m - x_n| - R_m - R_n`` over generated pairs."""
        gaps = [
            abs(self.centers[i] - self.centers[j]) - self.radii[i] - self.radii[j]
            for i in range(len(self.centers)) for j in range(i + 1, len(self.centers))
        ]
        return min(gaps) if gaps else math.inf

    def lower_bound_terms(self) -> np.ndarray:
        """Per-ball lower bounds of the divergent integral over B_{R_n}(x_n).

        ``omega_d rho(|x_n| - R_n) |x_n|^{2-d} R_n^d / (1 + (|x_n| + R_n)^2)``
        from the mean-value property of ``|x|^{2-d}``.
        """
        d = self.d
        omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        rho = profile_fn(self.rho)
        c = np.asarray(self.centers)
        r = np.asarray(self.radii)
        return omega * rho(c - r) * c ** (2 - d) * r ** d / (1 + (c + r) ** 2)

    def floor_terms(self) -> np.ndarray:
        """``omega_d / 5 * rho(|x_n|/2) 3^{-dn}``, each above ``omega_d / 5 * (4/3)^{dn}`` for n >= 2."""
        d = self.d
        omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        rho = profile_fn(self.rho)
        n = np.arange(1, len(self.centers) + 1)
        return omega / 5 * rho(np.asarray(self.centers) / 2) * 3.0 ** (-d * n)


class CounterexampleError(ValueError):
    pass


def build_counterexample_g(rho, d: int, n_balls: int, search_budget: int = 10**7):
    """Centres, radii and the function g of the growth-sharpness construction.

    ``x_1 = e_1`` and ``x_{n+1}`` is the smallest grid point
    ``t = 4|x_n| (1 + k/8)``, ``k >= 1``, with ``rho(t/2) > 4^{d(n+1)}``.
    Returns ``(CounterexampleSpec, g)``.
    """
    if d < 3:
        raise ValueError("the construction needs d >= 3")
    if n_balls < 1:
        raise ValueError("n_balls must be >= 1")
    if not isinstance(rho, ScalarField):
        rho = ScalarField.profile(rho, "rho")
    rfn = profile_fn(rho)
    probe = np.linspace(0.0, 64.0, 257)
    rv = rfn(probe)
    if np.any(rv < 1.0) or np.any(np.diff(rv) < 0):
        raise ValueError("rho must be >= 1 and nondecreasing")
    centers, radii = [1.0], [1.0 / 3.0]
    for n in range(1, n_balls):
        base = 4.0 * centers[-1]
        target = 4.0 ** (d * (n + 1))
        found = None
        k0 = 1
        chunk = 4096
        while k0 <= search_budget:
            ks = np.arange(k0, min(k0 + chunk, search_budget + 1))
            ts = base * (1.0 + ks / 8.0)
            ok = rfn(ts / 2.0) > target
            if ok.any():
                found = float(ts[int(np.argmax(ok))])
                break
            k0 += chunk
            chunk = min(chunk * 2, 1 << 20)
        if found is None:
            raise CounterexampleError("rho grows too slowly for requested n_balls")
        centers.append(found)
        radii.append(3.0 ** (-(n + 1)) * found)
    spec = CounterexampleSpec(rho, d, tuple(centers), tuple(radii))
    cvec = np.asarray(centers)
    rvec = np.asarray(radii)
    denom = rfn(cvec - rvec)

    def g(x):
        r2 = np.einsum("ni,ni->n", x, x)
        out = 2.0 + r2 * r2
        # distance to x_n = c_n e_1
        off = r2 - x[:, 0] ** 2
        for cn, rn, dn in zip(cvec, rvec, denom):
            inside = (x[:, 0] - cn) ** 2 + off < rn * rn
            if inside.any():
                out = np.where(inside, (1.0 + r2) / dn, out)
        return out

    return spec, ScalarField(d, g, f"g[counterexample,{rho.name}]")
