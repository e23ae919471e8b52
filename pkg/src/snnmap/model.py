"""Domain types shared by the partitioner, mapper and simulator.

Every type here is immutable once built. Array-backed types freeze their
numpy buffers so they can be handed to concurrent evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np

DEFAULT_CORE_CAPACITY = 256
DEFAULT_EDGE_CAPACITY = 256


class ModelError(ValueError):
    """Raised when a domain object would violate one of its invariants."""


def _frozen(values, dtype=np.int64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SnnGraph:
    """Undirected weighted neuron graph.

    Edges are stored canonically with ``src < dst`` and sorted
    lexicographically; weights count the spikes exchanged on the synapse pair.
    """

    num_neurons: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    vertex_weight: np.ndarray

    @classmethod
    def from_edges(cls, num_neurons: int, edges, vertex_weight=None) -> "SnnGraph":
        """Build a graph from ``(i, j, w)`` triples, validating every invariant.

        Endpoint order within a triple does not matter; a repeated undirected
        pair is an error rather than being merged.
        """
        if num_neurons < 0:
            raise ModelError(f"negative neuron count {num_neurons}")
        if not isinstance(edges, np.ndarray):
            edges = list(edges)
        triples = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
        i, j, w = triples[:, 0], triples[:, 1], triples[:, 2]
        if np.any(i == j):
            bad = int(i[np.argmax(i == j)])
            raise ModelError(f"self-loop on neuron {bad}")
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        if len(lo) and (lo.min() < 0 or hi.max() >= num_neurons):
            raise ModelError(f"edge endpoint outside [0, {num_neurons})")
        if np.any(w < 1):
            raise ModelError("edge weights must be >= 1")
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if dup.any():
                k = int(np.argmax(dup))
                raise ModelError(f"duplicate edge ({lo[k]}, {hi[k]})")
        if vertex_weight is None:
            vw = np.ones(num_neurons, dtype=np.int64)
        else:
            vw = np.asarray(vertex_weight, dtype=np.int64)
            if vw.shape != (num_neurons,):
                raise ModelError("vertex_weight length must equal num_neurons")
            if np.any(vw < 1):
                raise ModelError("vertex weights must be >= 1")
        return cls(int(num_neurons), _frozen(lo), _frozen(hi), _frozen(w), _frozen(vw))

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def total_edge_weight(self) -> int:
        return int(self.weight.sum())

    @property
    def total_vertex_weight(self) -> int:
        return int(self.vertex_weight.sum())

    def edges(self) -> Iterator[tuple[int, int, int]]:
        for i, j, w in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()):
            yield i, j, w

    @cached_property
    def adjacency(self) -> list[dict[int, int]]:
        adj: list[dict[int, int]] = [{} for _ in range(self.num_neurons)]
        for i, j, w in self.edges():
            adj[i][j] = w
            adj[j][i] = w
        return adj

    def __eq__(self, other) -> bool:
        if not isinstance(other, SnnGraph):
            return NotImplemented
        return (
            self.num_neurons == other.num_neurons
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
            and np.array_equal(self.vertex_weight, other.vertex_weight)
        )

    __hash__ = None  # type: ignore[assignment]


class SpikeEvent(NamedTuple):
    timestep: int
    src: int
    dst: int


@dataclass(frozen=True, eq=False)
class SpikeTrace:
    """Directed spike events ordered by timestep."""

    timestep: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    @classmethod
    def from_events(cls, events, num_neurons: int | None = None) -> "SpikeTrace":
        arr = np.asarray(list(events), dtype=np.int64).reshape(-1, 3)
        return cls.from_arrays(arr[:, 0], arr[:, 1], arr[:, 2], num_neurons)

    @classmethod
    def from_arrays(cls, timestep, src, dst, num_neurons: int | None = None) -> "SpikeTrace":
        t = np.asarray(timestep, dtype=np.int64)
        s = np.asarray(src, dtype=np.int64)
        d = np.asarray(dst, dtype=np.int64)
        if not (t.shape == s.shape == d.shape) or t.ndim != 1:
            raise ModelError("timestep/src/dst must be equal-length vectors")
        if len(t):
            if t.min() < 0:
                raise ModelError("negative timestep")
            if np.any(np.diff(t) < 0):
                k = int(np.argmax(np.diff(t) < 0)) + 1
                raise ModelError(f"timestep decreases at event {k}")
            if np.any(s == d):
                k = int(np.argmax(s == d))
                raise ModelError(f"event {k} has src == dst")
            lo = min(s.min(), d.min())
            hi = max(s.max(), d.max())
            if lo < 0 or (num_neurons is not None and hi >= num_neurons):
                raise ModelError(f"neuron id outside [0, {num_neurons})")
        return cls(_frozen(t), _frozen(s), _frozen(d))

    @property
    def length(self) -> int:
        return len(self.timestep)

    def __len__(self) -> int:
        return self.length

    def __iter__(self) -> Iterator[SpikeEvent]:
        for t, s, d in zip(self.timestep.tolist(), self.src.tolist(), self.dst.tolist()):
            yield SpikeEvent(t, s, d)

    def __getitem__(self, idx: int) -> SpikeEvent:
        return SpikeEvent(int(self.timestep[idx]), int(self.src[idx]), int(self.dst[idx]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrace):
            return NotImplemented
        return (
            np.array_equal(self.timestep, other.timestep)
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
        )

    __hash__ = None  # type: ignore[assignment]

    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected ``(lo, hi, count)`` spike tallies, sorted by ``(lo, hi)``."""
        if not self.length:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, empty
        lo = np.minimum(self.src, self.dst)
        hi = np.maximum(self.src, self.dst)
        base = int(hi.max()) + 1
        keys, counts = np.unique(lo * base + hi, return_counts=True)
        return keys // base, keys % base, counts.astype(np.int64)

    def pair_counts(self) -> dict[tuple[int, int], int]:
        lo, hi, c = self.pair_arrays()
        return {(a, b): w for a, b, w in zip(lo.tolist(), hi.tolist(), c.tolist())}

    def to_graph(self, num_neurons: int) -> SnnGraph:
        """Aggregate the trace into a graph whose edge weights are spike counts."""
        lo, hi, c = self.pair_arrays()
        return SnnGraph.from_edges(num_neurons, np.stack([lo, hi, c], axis=1))

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.timestep, self.src, self.dst):
            h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


def check_consistency(graph: SnnGraph, trace: SpikeTrace) -> bool:
    """True when the trace aggregates exactly to the graph's edge weights."""
    return trace.pair_counts() == {(i, j): w for i, j, w in graph.edges()}


@dataclass(frozen=True, eq=False)
class Partitioning:
    assignment: np.ndarray
    k: int
    capacity: int

    @classmethod
    def build(cls, assignment, k: int, capacity: int, vertex_weight=None) -> "Partitioning":
        a = np.asarray(assignment, dtype=np.int64)
        if k < 1:
            raise ModelError("partition count must be >= 1")
        if capacity < 1:
            raise ModelError("capacity must be >= 1")
        if len(a) and (a.min() < 0 or a.max() >= k):
            raise ModelError(f"partition id outside [0, {k})")
        vw = np.ones(len(a), dtype=np.int64) if vertex_weight is None else np.asarray(vertex_weight)
        loads = np.bincount(a, weights=vw, minlength=k).astype(np.int64)
        if np.any(loads > capacity):
            p = int(np.argmax(loads))
            raise ModelError(f"partition {p} holds {loads[p]} > capacity {capacity}")
        return cls(_frozen(a), int(k), int(capacity))

    @property
    def num_neurons(self) -> int:
        return len(self.assignment)

    def loads(self, vertex_weight=None) -> np.ndarray:
        w = None if vertex_weight is None else np.asarray(vertex_weight)
        return np.bincount(self.assignment, weights=w, minlength=self.k).astype(np.int64)

    @property
    def empty(self) -> tuple[bool, ...]:
        """Per-partition flag: True when no neuron was assigned there."""
        return tuple(bool(x == 0) for x in self.loads())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partitioning):
            return NotImplemented
        return (
            self.k == other.k
            and self.capacity == other.capacity
            and np.array_equal(self.assignment, other.assignment)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class MeshTopology:
    width: int
    height: int
    core_capacity: int = DEFAULT_CORE_CAPACITY
    edge_capacity: int | None = DEFAULT_EDGE_CAPACITY  # None: unbounded

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ModelError(f"mesh must be at least 1x1, got {self.width}x{self.height}")
        if self.core_capacity < 1:
            raise ModelError("core_capacity must be >= 1")
        if self.edge_capacity is not None and self.edge_capacity < 1:
            raise ModelError("edge_capacity must be >= 1")

    @classmethod
    def parse(cls, text: str, **kwargs) -> "MeshTopology":
        """Parse ``"WxH"`` (e.g. ``"5x5"``)."""
        try:
            w, h = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise ModelError(f"mesh must look like WxH, got {text!r}") from None
        return cls(w, h, **kwargs)

    @property
    def num_cores(self) -> int:
        return self.width * self.height

    def coord(self, core: int) -> tuple[int, int]:
        return core % self.width, core // self.width

    def index(self, xy: Sequence[int]) -> int:
        return int(xy[1]) * self.width + int(xy[0])

    def contains(self, xy: Sequence[int]) -> bool:
        return 0 <= xy[0] < self.width and 0 <= xy[1] < self.height

    def label(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class Mapping:
    """Injective placement of partitions onto mesh cores.

    ``core_of[p]`` is the ``(x, y)`` coordinate hosting partition ``p``.
    """

    core_of: tuple[tuple[int, int], ...]

    def __post_init__(self):
        cores = tuple((int(x), int(y)) for x, y in self.core_of)
        object.__setattr__(self, "core_of", cores)
        if len(set(cores)) != len(cores):
            raise ModelError("mapping is not injective")

    @classmethod
    def from_indices(cls, cores: Sequence[int], mesh: MeshTopology) -> "Mapping":
        return cls(tuple(mesh.coord(int(c)) for c in cores))

    @property
    def k(self) -> int:
        return len(self.core_of)

    def indices(self, mesh: MeshTopology) -> np.ndarray:
        return np.array([mesh.index(c) for c in self.core_of], dtype=np.int64)

    def validate(self, mesh: MeshTopology) -> None:
        for p, c in enumerate(self.core_of):
            if not mesh.contains(c):
                raise ModelError(f"partition {p} mapped outside the {mesh.label()} mesh at {c}")

    def matrix(self, mesh: MeshTopology) -> np.ndarray:
        """The 0/1 cores x partitions assignment matrix."""
        m = np.zeros((mesh.num_cores, self.k), dtype=np.int8)
        m[self.indices(mesh), np.arange(self.k)] = 1
        return m

    def xy_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.array(self.core_of, dtype=np.int64).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]


@dataclass(frozen=True, eq=False)
class CommMatrix:
    """Directed partition-to-partition spike counts."""

    counts: np.ndarray
    trace_length: int = field(default=-1)

    def __post_init__(self):
        c = _frozen(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ModelError("communication matrix must be square")
        object.__setattr__(self, "counts", c)
        if self.trace_length < 0:
            object.__setattr__(self, "trace_length", int(c.sum()))

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def intra(self) -> int:
        return int(np.trace(self.counts))

    @property
    def inter(self) -> int:
        return int(self.counts.sum()) - self.intra

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    __hash__ = None  # type: ignore[assignment]


def comm_matrix(trace: SpikeTrace, part: Partitioning) -> CommMatrix:
    """Tally every trace event into ``C[partition(src), partition(dst)]``."""
    k = part.k
    if trace.length == 0:
        return CommMatrix(np.zeros((k, k), dtype=np.int64), 0)
    hi = max(int(trace.src.max()), int(trace.dst.max()))
    if hi >= part.num_neurons:
        raise ModelError(f"neuron {hi} has no partition assignment")
    a = part.assignment[trace.src]
    b = part.assignment[trace.dst]
    flat = np.bincount(a * k + b, minlength=k * k)
    return CommMatrix(flat.reshape(k, k), trace.length)


def cut_weight(graph: SnnGraph, part: Partitioning) -> int:
    """Total weight of graph edges whose endpoints sit in different partitions."""
    if part.num_neurons != graph.num_neurons:
        raise ModelError("partitioning does not cover the graph")
    a = part.assignment
    crossing = a[graph.src] != a[graph.dst]
    return int(graph.weight[crossing].sum())
