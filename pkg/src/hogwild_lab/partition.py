"""Filter partitions of a gradient support.

A support of size ``m`` is cut into ``d = min(D, m)`` contiguous slices of its
sorted indices; the first ``m mod d`` slices are one element longer.  Drawing one
slice uniformly and scaling the update by ``d`` keeps it unbiased.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class EmptySupportError(ValueError):
    pass


def slice_bounds(m: int, d: int, u: int) -> tuple[int, int]:
    """Start offset and length of slice ``u`` when ``m`` items form ``d`` slices."""
    q, r = divmod(m, d)
    return u * q + min(u, r), q + (1 if u < r else 0)


@dataclass(frozen=True, eq=False)
class FilterPartition:
    support: tuple[int, ...]
    D: int
    sets: tuple[tuple[int, ...], ...]

    @property
    def d(self) -> int:
        return len(self.sets)

    def set_sizes(self) -> list[int]:
        return [len(s) for s in self.sets]


def build_partition(support: Iterable[int], D: int) -> FilterPartition:
    if D < 1:
        raise ValueError("D must be >= 1")
    ordered = tuple(sorted({int(i) for i in support}))
    if not ordered:
        raise EmptySupportError("empty gradient support")
    m = len(ordered)
    d = min(D, m)
    sets = []
    for u in range(d):
        start, size = slice_bounds(m, d, u)
        sets.append(ordered[start:start + size])
    return FilterPartition(ordered, D, tuple(sets))


def sample_filter(p: FilterPartition, rng: np.random.Generator) -> tuple[int, tuple[int, ...], int]:
    """Uniform slice index ``u``, its index set and the multiplier ``d``."""
    u = int(rng.integers(0, p.d)) if p.d > 1 else 0
    return u, p.sets[u], p.d


def verify_unbiased(p: FilterPartition) -> bool:
    """Exact check of ``d * E_u[S_u] = D_xi``: every support index in exactly one set."""
    if p.d == 0:
        return False
    pos = {j: k for k, j in enumerate(p.support)}
    hits = np.zeros(len(p.support), dtype=np.int64)
    for s in p.sets:
        for j in s:
            if j not in pos:
                return False
            hits[pos[j]] += 1
    # each set has probability 1/d, so d * (1/d) * hits must equal the indicator
    return bool(np.all(hits == 1))


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def fraction_size(m: int, v: float) -> int:
    return max(1, round_half_up(v * m))


def fraction_filter(support: Iterable[int], v: float, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform random subset of size ``max(1, round(v |support|))``.

    This is not a partition sampler; the engines pair it with the multiplier
    ``|support| / size`` which keeps each coordinate's expected update exact.
    """
    if not 0 < v <= 1:
        raise ValueError("fraction v must be in (0, 1]")
    ordered = np.array(sorted({int(i) for i in support}), dtype=np.int64)
    if ordered.size == 0:
        raise EmptySupportError("empty gradient support")
    k = fraction_size(len(ordered), v)
    if k == len(ordered):
        return tuple(int(i) for i in ordered)
    chosen = rng.choice(len(ordered), size=k, replace=False)
    return tuple(int(i) for i in np.sort(ordered[chosen]))
