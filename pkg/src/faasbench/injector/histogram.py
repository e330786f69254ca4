"""Log-bucketed latency histogram with 3 significant digits.

Bucket layout follows the usual HDR scheme: values below 2048 get their own
bucket; every further power of two is split into 1024 linear sub-buckets, so
a bucket is never wider than 1/1024 of its lowest value.
"""

from __future__ import annotations

import math
import operator
from fractions import Fraction
from array import array
from typing import Iterable

from faasbench import kernels

DEFAULT_MAX_VALUE = (1 << 43) - 1  # ~2.4 h in nanoseconds


def nearest_rank(q: float, n: int) -> int:
    """1-based rank of the ``q``-th percentile among ``n`` values."""
    # exact decimal q so that e.g. 99.9% of 1e5 is rank 99900, not 99901
    return max(1, math.ceil(Fraction(str(q)) * n / 100))


class EmptyHistogram(ValueError):
    pass


class LatencyHistogram:
    def __init__(self, max_value: int = DEFAULT_MAX_VALUE):
        self.max_value = max_value
        self.counts = kernels.new_i64(kernels.hist_index(max_value) + 1)
        self.total = 0
        self.min = None
        self.max = None
        self.sum = 0

    def __len__(self):
        return self.total

    def record(self, value: int) -> None:
        self.record_many((value,))

    def record_many(self, values: Iterable[int]) -> None:
        n, lo, hi, s = kernels.hist_record_many(self.counts, values, self.max_value)
        if n == 0:
            return
        self.total += n
        self.sum += s
        self.min = lo if self.min is None else min(self.min, lo)
        self.max = hi if self.max is None else max(self.max, hi)

    def merge(self, other: LatencyHistogram) -> LatencyHistogram:
        """Bucket-wise sum of two histograms, returned as a new histogram."""
        if other.max_value != self.max_value:
            raise ValueError("cannot merge histograms with different ranges")
        out = LatencyHistogram(self.max_value)
        out.counts = array("q", map(operator.add, self.counts, other.counts))
        out.total = self.total + other.total
        out.sum = self.sum + other.sum
        mins = [m for m in (self.min, other.min) if m is not None]
        maxs = [m for m in (self.max, other.max) if m is not None]
        out.min = min(mins) if mins else None
        out.max = max(maxs) if maxs else None
        return out

    __add__ = merge

    def bucket_bounds(self, value: int) -> tuple[int, int]:
        """Lowest and highest value sharing ``value``'s bucket."""
        idx = kernels.hist_index(value)
        lo = kernels.hist_lowest(idx)
        hi = kernels.hist_lowest(idx + 1) - 1
        return lo, hi

    def percentile(self, q: float) -> int:
        """Value at percentile ``q``; the highest value of the matching bucket,
        clamped to the recorded min/max."""
        if self.total == 0:
            raise EmptyHistogram("percentile of an empty histogram")
        if not 0 <= q <= 100:
            raise ValueError("q must be within [0, 100]")
        rank = nearest_rank(q, self.total)
        idx = kernels.hist_index_at_rank(self.counts, rank)
        value = kernels.hist_lowest(idx + 1) - 1
        return min(max(value, self.min), self.max)

    def mean(self) -> float:
        if self.total == 0:
            raise EmptyHistogram("mean of an empty histogram")
        return self.sum / self.total

    def nonzero(self) -> list[tuple[int, int]]:
        """(bucket index, count) pairs with a nonzero count."""
        return [(i, c) for i, c in enumerate(self.counts) if c]

    def __eq__(self, other):
        if not isinstance(other, LatencyHistogram):
            return NotImplemented
        return (self.total, self.min, self.max, self.sum, self.counts) == (
            other.total, other.min, other.max, other.sum, other.counts)

    def summary(self) -> dict:
        if self.total == 0:
            return {"count": 0}
        return {
            "count": self.total,
            "min": self.min,
            "mean": self.mean(),
            "p50": self.percentile(50),
            "p90": self.percentile(90),
            "p99": self.percentile(99),
            "p999": self.percentile(99.9),
            "max": self.max,
        }
