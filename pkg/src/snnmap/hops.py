"""Analytic average-hop evaluation under XY dimension-order routing.

Because XY routes are static, the hop count of every spike is the Manhattan
distance between the cores hosting its source and destination partitions.
Aggregating the trace into a partition-level communication matrix first makes
evaluating a candidate mapping ``O(k^2)`` regardless of trace length.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import CommMatrix, Mapping, ModelError


def hop_distance(s: Sequence[int], d: Sequence[int]) -> int:
    return abs(s[0] - d[0]) + abs(s[1] - d[1])


def distance_matrix(mapping: Mapping) -> np.ndarray:
    xs, ys = mapping.xy_arrays()
    return np.abs(xs[:, None] - xs[None, :]) + np.abs(ys[:, None] - ys[None, :])


def total_hops(comm: CommMatrix, mapping: Mapping) -> int:
    """Exact integer numerator: sum of hop distances over every spike."""
    if mapping.k < comm.k:
        raise ModelError(f"mapping places {mapping.k} partitions, traffic has {comm.k}")
    dist = distance_matrix(mapping)[: comm.k, : comm.k]
    return int((dist * comm.counts).sum())


def average_hop(comm: CommMatrix, mapping: Mapping, trace_length: int | None = None) -> float:
    """Traffic-weighted mean hop count over the whole trace.

    Intra-partition spikes count in the denominator and contribute zero hops.
    """
    n = comm.trace_length if trace_length is None else trace_length
    if n <= 0:
        raise ModelError("average hop is undefined for an empty trace")
    return total_hops(comm, mapping) / n


def average_hop_exact(comm: CommMatrix, mapping: Mapping, trace_length: int | None = None) -> Fraction:
    n = comm.trace_length if trace_length is None else trace_length
    if n <= 0:
        raise ModelError("average hop is undefined for an empty trace")
    return Fraction(total_hops(comm, mapping), n)


def intercore_average_hop(comm: CommMatrix, mapping: Mapping) -> float:
    """Mean hop count over spikes that leave their core (0.0 if none do)."""
    inter = comm.inter
    return total_hops(comm, mapping) / inter if inter else 0.0


class HopObjective:
    """Average-hop objective over core-index placements, with a result cache.

    ``placement[p]`` is the linear core index (``y * width + x``) of partition
    ``p``. Only the first ``k`` entries are read, so a full core permutation
    with trailing placeholders works as-is.
    """

    def __init__(self, comm: CommMatrix, width: int, trace_length: int | None = None, cache_size: int = 200_000):
        self.comm = comm
        self.k = comm.k
        self.width = width
        self.trace_length = comm.trace_length if trace_length is None else trace_length
        # symmetric upper-triangle weights: distance is symmetric
        sym = comm.counts + comm.counts.T
        iu = np.triu_indices(self.k, 1)
        keep = sym[iu] > 0
        self._a = iu[0][keep]
        self._b = iu[1][keep]
        self._w = sym[iu][keep].astype(np.int64)
        self._cache: dict[bytes, int] = {}
        self._cache_size = cache_size
        self.evaluations = 0

    def numerator(self, placement: np.ndarray) -> int:
        cores = np.asarray(placement[: self.k], dtype=np.int64)
        key = cores.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        self.evaluations += 1
        xs = cores % self.width
        ys = cores // self.width
        d = np.abs(xs[self._a] - xs[self._b]) + np.abs(ys[self._a] - ys[self._b])
        val = int(d @ self._w)
        if len(self._cache) >= self._cache_size:
            self._cache.clear()
        self._cache[key] = val
        return val

    def __call__(self, placement: np.ndarray) -> float:
        if self.trace_length <= 0:
            return 0.0
        return self.numerator(placement) / self.trace_length
