"""Latency statistics: ECDF tables and summary aggregates.

Percentiles use the nearest-rank method (the ceil(p*n)-th order
statistic) for cross-language determinism; stddev is the sample standard
deviation with the n-1 denominator, defined as 0 for a single sample.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from ..errors import EmptySamples


@dataclass(frozen=True)
class EcdfTable:
    """Empirical CDF as (x, p) points.

    x strictly increasing, p non-decreasing with final value 1.0;
    duplicate sample values collapse into one point carrying the higher
    cumulative probability.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise EmptySamples("an ECDF needs at least one point")

    def probability_at(self, x: float) -> float:
        """F(x) = fraction of samples <= x."""
        result = 0.0
        for value, p in self.points:
            if value <= x:
                result = p
            else:
                break
        return result


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean_ms: float
    p50_ms: float
    p90_ms: float
    p99_ms: float
    min_ms: float
    max_ms: float
    stddev_ms: float


def compute_ecdf(values_ms: Sequence[float]) -> EcdfTable:
    """Standard ECDF with duplicates collapsed."""
    if not values_ms:
        raise EmptySamples("cannot compute an ECDF of zero samples")
    ordered = sorted(values_ms)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, value in enumerate(ordered, start=1):
        if points and points[-1][0] == value:
            points[-1] = (value, i / n)
        else:
            points.append((value, i / n))
    return EcdfTable(points=tuple(points))


def _nearest_rank(ordered: Sequence[float], p: float) -> float:
    rank = math.ceil(p * len(ordered))
    return ordered[max(rank, 1) - 1]


def summarize(values_ms: Sequence[float]) -> SummaryStats:
    """Aggregate statistics of a latency sample set."""
    if not values_ms:
        raise EmptySamples("cannot summarize zero samples")
    ordered = sorted(values_ms)
    n = len(ordered)
    return SummaryStats(
        n=n,
        mean_ms=math.fsum(ordered) / n,
        p50_ms=_nearest_rank(ordered, 0.50),
        p90_ms=_nearest_rank(ordered, 0.90),
        p99_ms=_nearest_rank(ordered, 0.99),
        min_ms=ordered[0],
        max_ms=ordered[-1],
        stddev_ms=statistics.stdev(ordered) if n > 1 else 0.0,
    )
