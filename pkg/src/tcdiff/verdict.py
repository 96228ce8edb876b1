"""Verdicts with their supporting evidence."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional


class Outcome(enum.Enum):
    ABSOLUTELY_CONTINUOUS = "AbsolutelyContinuous"
    SINGULAR = "Singular"
    EXPLOSIVE = "Explosive"
    CONSERVATIVE = "Conservative"
    UI_MARTINGALE = "UI"
    NOT_UI = "NotUI"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class Evidence:
    name: str
    value: object
    threshold: object = None
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "value": _jsonable(self.value), "threshold": _jsonable(self.threshold),
                "note": self.note}


@dataclass
class Verdict:
    outcome: Outcome
    evidence: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def add(self, name: str, value, threshold=None, note: str = "") -> "Verdict":
        self.evidence.append(Evidence(name, value, threshold, note))
        return self

    def get(self, name: str) -> Optional[Evidence]:
        for e in self.evidence:
            if e.name == name:
                return e
        return None

    @property
    def inconclusive(self) -> bool:
        return self.outcome is Outcome.INCONCLUSIVE

    def as_dict(self) -> dict:
        return {"outcome": self.outcome.value, "flags": list(self.flags),
                "evidence": [e.as_dict() for e in self.evidence]}


def _jsonable(v):
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        try:
            v = v.item()
        except (ValueError, AttributeError):
            return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v
