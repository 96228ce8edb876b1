"""Empirical laws on [0, inf] and a censoring-aware two-sample KS distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

MIN_SAMPLES = 200


@dataclass
class EmpiricalLaw:
    """Finite samples plus the mass sitting at (or censored towards) infinity."""

    samples: np.ndarray
    censored_at: Optional[float] = None
    n_infinite: int = 0

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite; count infinite values in n_infinite")
        if self.n_infinite < 0:
            raise ValueError("n_infinite must be >= 0")

    @classmethod
    def from_values(cls, values, censored_at: Optional[float] = None) -> "EmpiricalLaw":
        v = np.asarray(values, dtype=float)
        fin = np.isfinite(v)
        return cls(v[fin], censored_at, int((~fin).sum()))

    @property
    def n_total(self) -> int:
        return int(self.samples.size + self.n_infinite)

    @property
    def infinite_mass(self) -> float:
        return self.n_infinite / self.n_total if self.n_total else 0.0

    def mean_finite(self) -> float:
        return float(self.samples.mean()) if self.samples.size else math.nan

    def sub_cdf(self, x: np.ndarray) -> np.ndarray:
        """``P(value <= x)`` with the infinite mass excluded from the jumps."""
        return np.searchsorted(self.samples, x, side="right") / self.n_total

    def scaled(self, k: float) -> "EmpiricalLaw":
        c = None if self.censored_at is None else self.censored_at * k
        return EmpiricalLaw(self.samples * k, c, self.n_infinite)


@dataclass
class KSResult:
    D: float
    mass_gap: float
    cutoff: float
    disjoint: bool
    n1: int
    n2: int

    @property
    def critical_1pct(self) -> float:
        return ks_critical(self.n1, self.n2)

    def as_dict(self) -> dict:
        return {"D": self.D, "mass_gap": self.mass_gap, "cutoff": self.cutoff, "disjoint": self.disjoint,
                "n1": self.n1, "n2": self.n2, "critical_1pct": self.critical_1pct}


def ks_critical(n1: int, n2: int, c_alpha: float = 1.63) -> float:
    """Asymptotic two-sample KS critical value (1.63 is the 1% level)."""
    return c_alpha * math.sqrt((n1 + n2) / (n1 * n2))


def ks_censored(law1: EmpiricalLaw, law2: EmpiricalLaw) -> KSResult:
    """Sup distance of the sub-distribution functions on ``[0, min censor]``.

    Samples beyond the common censoring point count as mass, not as jumps,
    so the mass gap carries the comparison of the tails.
    """
    for law in (law1, law2):
        if law.n_total < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples per law, got {law.n_total}")
    cuts = [c for c in (law1.censored_at, law2.censored_at) if c is not None]
    cutoff = min(cuts) if cuts else math.inf
    s1 = law1.samples[law1.samples <= cutoff]
    s2 = law2.samples[law2.samples <= cutoff]
    beyond1 = law1.n_total - s1.size
    beyond2 = law2.n_total - s2.size
    mass_gap = abs(beyond1 / law1.n_total - beyond2 / law2.n_total)
    pts = np.concatenate([s1, s2])
    disjoint = bool(s1.size and s2.size and (s1[-1] < s2[0] or s2[-1] < s1[0]))
    if pts.size == 0:
        return KSResult(0.0, mass_gap, cutoff, False, law1.n_total, law2.n_total)
    D = float(np.max(np.abs(law1.sub_cdf(pts) - law2.sub_cdf(pts))))
    if disjoint:
        D = max(D, s1.size / law1.n_total, s2.size / law2.n_total)
    return KSResult(D, mass_gap, cutoff, disjoint, law1.n_total, law2.n_total)
