"""Inequality-check records shared by the verification routines."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

SLACK_TOL = 1e-9


@dataclass
class Check:
    """One instantiated inequality ``lhs <= rhs``, reported at its worst instance."""

    name: str
    lhs: float
    rhs: float
    slack: float
    status: str  # "pass", "fail" or "skipped"
    where: str = ""
    note: str = ""
    instances: int = 1

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def as_dict(self) -> dict:
        return asdict(self)


def skipped(name: str, note: str) -> Check:
    return Check(name, math.nan, math.nan, math.nan, "skipped", note=note, instances=0)


def worst_of(name: str, instances: Iterable[tuple[float, float, str]], tol: float = SLACK_TOL) -> Check:
    """Collapse ``(lhs, rhs, where)`` instances into the one with minimal slack."""
    best: Optional[tuple[float, float, float, str]] = None
    count = 0
    for lhs, rhs, where in instances:
        count += 1
        slack = float(rhs) - float(lhs)
        if best is None or slack < best[2]:
            best = (float(lhs), float(rhs), slack, where)
    if best is None:
        return skipped(name, "no instances in range")
    lhs, rhs, slack, where = best
    status = "pass" if slack >= -tol else "fail"
    return Check(name, lhs, rhs, slack, status, where=where, instances=count)


@dataclass
class VerificationReport:
    """A list of checks for one chain."""

    chain: str
    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> None:
        self.checks.append(check)

    def extend(self, checks: Iterable[Check]) -> None:
        self.checks.extend(checks)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == "fail"]

    @property
    def worst_slack(self) -> float:
        slacks = [c.slack for c in self.checks if c.status != "skipped"]
        return min(slacks) if slacks else math.inf

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)
