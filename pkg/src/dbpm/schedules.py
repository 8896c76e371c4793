"""Local stepsize sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepsizeSchedule:
    """Per-agent stepsizes.

    ``constant``: ``alpha_i^t = base_i``.
    ``diminishing``: ``alpha_i^t = base_i / (t + 1)**exponent`` with
    ``0.5 < exponent <= 1`` (not summable, square summable, nonincreasing).
    """

    kind: str
    base: tuple[float, ...]
    exponent: float = 1.0

    def __post_init__(self):
        base = tuple(float(b) for b in np.atleast_1d(self.base))
        object.__setattr__(self, "base", base)
        if self.kind not in ("constant", "diminishing"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not base or any(b <= 0 for b in base):
            raise ValueError("stepsizes must be positive")
        if self.kind == "diminishing" and not 0.5 < self.exponent <= 1.0:
            raise ValueError(f"diminishing exponent must lie in (0.5, 1], got {self.exponent}")

    @classmethod
    def constant(cls, alpha, n_agents: int = 1) -> "StepsizeSchedule":
        return cls("constant", _per_agent(alpha, n_agents))

    @classmethod
    def diminishing(cls, alpha0, exponent: float = 1.0, n_agents: int = 1) -> "StepsizeSchedule":
        return cls("diminishing", _per_agent(alpha0, n_agents), exponent)

    @property
    def n_agents(self) -> int:
        return len(self.base)

    def at(self, t: int) -> np.ndarray:
        """All agents' stepsizes at iteration ``t``."""
        if t < 0:
            raise ValueError("iteration index must be >= 0")
        b = np.asarray(self.base)
        if self.kind == "constant":
            return b
        return b / (t + 1.0) ** self.exponent


def _per_agent(alpha, n_agents):
    a = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    if a.size == 1:
        a = np.full(n_agents, a[0])
    elif a.size != n_agents:
        raise ValueError(f"expected {n_agents} per-agent stepsizes, got {a.size}")
    return tuple(a.tolist())


def stepsize(s: StepsizeSchedule, agent: int, t: int) -> float:
    return float(s.at(t)[agent])


def envelope(s: StepsizeSchedule, t: int) -> tuple[float, float]:
    """``(min_i alpha_i^t, max_i alpha_i^t)``."""
    a = s.at(t)
    return float(a.min()), float(a.max())
