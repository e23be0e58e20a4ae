"""Monte Carlo aggregation: stable running moments with an associative merge."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = ["Moments", "mc_aggregate", "within_se", "lower_confidence_bound", "quantile"]


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred sum of squares of a sample (Welford state)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> "Moments":
        n = self.count + 1
        d = x - self.mean
        mean = self.mean + d / n
        return Moments(n, mean, self.m2 + d * (x - mean))

    def merge(self, other: "Moments") -> "Moments":
        """Chan et al. pairwise combination; associative up to rounding."""
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def sd(self) -> float | None:
        return math.sqrt(self.m2 / (self.count - 1)) if self.count >= 2 else None

    @property
    def se(self) -> float | None:
        sd = self.sd
        return None if sd is None else sd / math.sqrt(self.count)


def _pairwise(values: np.ndarray) -> Moments:
    if values.size <= 64:
        m = Moments()
        for v in values:
            m = m.push(float(v))
        return m
    h = values.size // 2
    return _pairwise(values[:h]).merge(_pairwise(values[h:]))


def mc_aggregate(stream: Iterable[float]) -> tuple[float, float | None, int]:
    """``(mean, se, count)`` of a stream of per-replica statistics.

    Blocks of 64 use Welford updates and blocks are combined pairwise, so
    the result is stable for long streams and independent of how the stream
    was produced.  ``se = sd / sqrt(count)`` with the unbiased ``sd``; it is
    None for fewer than two replicas.
    """
    values = np.fromiter((float(v) for v in stream), dtype=float)
    if values.size == 0:
        return float("nan"), None, 0
    m = _pairwise(values)
    return m.mean, m.se, m.count


def within_se(mean: float, se: float | None, k: float = 3.0, target: float = 0.0) -> bool:
    """``|mean - target| <= k * se`` (False when se is unavailable)."""
    if se is None:
        return False
    return abs(mean - target) <= k * se


def lower_confidence_bound(mean: float, se: float | None, z: float = 1.6448536269514722) -> float:
    """One-sided normal lower bound; 95% by default."""
    return mean - z * (se or 0.0)


def quantile(values, q: float) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), q))
