"""Zipfian workload generation and phase schedules."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def zipf_pmf(n: int, theta: float) -> np.ndarray:
    """P(i) for i = 1..n, proportional to i**-theta."""
    return _zipf_pmf(int(n), float(theta)).copy()


@lru_cache(maxsize=32)
def _zipf_pmf(n: int, theta: float) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    w = np.arange(1, n + 1, dtype=np.float64) ** -theta
    pmf = w / w.sum()
    pmf.setflags(write=False)
    return pmf


def zipf_sample(n: int, theta: float, rng: np.random.Generator, size: int | None = None):
    """Key index (or array of indices) in [1, n]."""
    pmf = _zipf_pmf(int(n), float(theta))
    draws = rng.choice(n, size=size, p=pmf) + 1
    return int(draws) if size is None else draws


@dataclass(frozen=True)
class Phase:
    start_s: float
    theta: float
    offered_ops: float
    offset: int = 0  # hotspot shift: rank 1 maps to key index ``offset``

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if self.offered_ops <= 0:
            raise ValueError("offered_ops must be positive")


@dataclass(frozen=True)
class WorkloadSpec:
    n_keys: int = 10_000
    key_bytes: int = 8
    value_bytes: int = 256
    phases: tuple[Phase, ...] = field(default_factory=lambda: (Phase(0.0, 1.0, 1000.0),))

    def __post_init__(self):
        if self.n_keys < 1:
            raise ValueError("n_keys must be positive")
        if not self.phases:
            raise ValueError("at least one phase is required")
        starts = [p.start_s for p in self.phases]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ValueError("phases must start at strictly increasing times")

    def phase_at(self, t: float) -> Phase:
        current = self.phases[0]
        for p in self.phases:
            if p.start_s <= t + 1e-9:
                current = p
            else:
                break
        return current

    def key_pmf(self, phase: Phase) -> np.ndarray:
        """Access probability per key index 0..n-1 for ``phase``."""
        pmf = _zipf_pmf(self.n_keys, phase.theta)
        return np.roll(pmf, phase.offset % self.n_keys)

    def draw_counts(self, phase: Phase, dt: float, rng: np.random.Generator) -> np.ndarray:
        """Request counts per key index over an interval of ``dt`` seconds."""
        total = int(round(phase.offered_ops * dt))
        return rng.multinomial(total, self.key_pmf(phase))


def key_name(index: int) -> str:
    return f"k{index:07d}"
