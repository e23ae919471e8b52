"""Placement of partitions onto mesh cores minimizing average hop count.

Three metaheuristics share one objective (``HopObjective``) and one move:
exchanging the contents of two cores, where a core holds either a partition
or nothing. When there are more cores than partitions the empty cores are
tracked as placeholder partitions ``k .. n_cores - 1``, so every search state
is a full permutation ``pos`` with ``pos[p]`` the core index of ``p``.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hops import HopObjective
from .model import CommMatrix, Mapping, MeshTopology, ModelError

ALGORITHMS = ("sa", "pso", "tabu")
DEFAULT_ITERATIONS = 10_000


@dataclass(frozen=True)
class SAParams:
    t_initial: float | None = None  # None: calibrate to 0.8 acceptance of the median uphill move
    t_final: float | None = None  # None: t_initial * 1e-3
    cooling_ratio: float = 0.97
    moves_per_temp: int | None = None  # None: 10 * k


@dataclass(frozen=True)
class PSOParams:
    swarm_size: int = 20
    inertia: float = 0.5
    c_personal: float = 0.5
    c_global: float = 0.5


@dataclass(frozen=True)
class TabuParams:
    tenure: int | None = None  # None: 7 + k // 10
    neighborhood_sample: int | None = None  # None: min(#moves, 200)


@dataclass(frozen=True)
class SearchConfig:
    """Search settings.

    The budget is counted in objective evaluations when ``iterations`` is set
    (reproducible) and in wall-clock seconds when ``time_budget`` is set.
    With neither, ``DEFAULT_ITERATIONS`` evaluations are used.
    """

    algorithm: str = "sa"
    iterations: int | None = None
    time_budget: float | None = None
    seed: int = 0
    sa: SAParams = field(default_factory=SAParams)
    pso: PSOParams = field(default_factory=PSOParams)
    tabu: TabuParams = field(default_factory=TabuParams)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ModelError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.iterations is not None and self.time_budget is not None:
            raise ModelError("give either an iteration budget or a time budget, not both")
        if (self.iterations or 0) < 0 or (self.time_budget or 0) < 0:
            raise ModelError("budgets must be non-negative")
        if not 0.0 < self.sa.cooling_ratio < 1.0:
            raise ModelError("cooling_ratio must lie in (0, 1)")
        if self.sa.moves_per_temp is not None and self.sa.moves_per_temp < 1:
            raise ModelError("moves_per_temp must be >= 1")
        if self.pso.swarm_size < 1:
            raise ModelError("swarm_size must be >= 1")
        if self.tabu.tenure is not None and self.tabu.tenure < 0:
            raise ModelError("tabu tenure must be >= 0")
        if self.tabu.neighborhood_sample is not None and self.tabu.neighborhood_sample < 1:
            raise ModelError("neighborhood_sample must be >= 1")

    @property
    def by_iterations(self) -> bool:
        return self.time_budget is None


@dataclass(frozen=True)
class Placement:
    mapping: Mapping
    H: float


@dataclass(frozen=True)
class SearchResult:
    placement: Placement
    initial: Placement
    log: tuple[tuple[float, float], ...]  # (elapsed, best H); elapsed in evaluations or seconds
    evaluations: int


def random_mapping(k: int, mesh: MeshTopology, seed: int | np.random.Generator = 0) -> Mapping:
    """Uniform random injective placement of ``k`` partitions."""
    if k > mesh.num_cores:
        raise ModelError(f"{k} partitions do not fit on {mesh.num_cores} cores")
    rng = np.random.default_rng(seed)
    return Mapping.from_indices(rng.choice(mesh.num_cores, size=k, replace=False), mesh)


def swap_cores(mapping: Mapping, mesh: MeshTopology, c1: int, c2: int) -> Mapping:
    """Exchange whatever the two cores host (an involution)."""
    cores = mapping.indices(mesh)
    a = np.flatnonzero(cores == c1)
    b = np.flatnonzero(cores == c2)
    cores[a] = c2
    cores[b] = c1
    return Mapping.from_indices(cores, mesh)


def swap_neighbor(mapping: Mapping, mesh: MeshTopology, rng: np.random.Generator) -> Mapping:
    """Random neighbour: a partition trades cores with another core's occupant.

    If the other core is empty the partition simply relocates there.
    """
    if mapping.k == 0 or mesh.num_cores < 2:
        return mapping
    cores = mapping.indices(mesh)
    c1 = int(cores[rng.integers(mapping.k)])
    c2 = int(rng.integers(mesh.num_cores - 1))
    if c2 >= c1:
        c2 += 1
    return swap_cores(mapping, mesh, c1, c2)


class _Search:
    """State shared by the three algorithms: budget, objective, best-so-far log."""

    def __init__(self, comm: CommMatrix, mesh: MeshTopology, cfg: SearchConfig):
        if comm.k > mesh.num_cores:
            raise ModelError(f"{comm.k} partitions do not fit on {mesh.num_cores} cores")
        self.cfg = cfg
        self.mesh = mesh
        self.k = comm.k
        self.n = mesh.num_cores
        self.length = comm.trace_length
        self.objective = HopObjective(comm, mesh.width)
        self.rng = np.random.default_rng(cfg.seed)
        self.limit = cfg.time_budget if not cfg.by_iterations else (
            DEFAULT_ITERATIONS if cfg.iterations is None else cfg.iterations
        )
        self.spent = 0
        self.t0 = time.perf_counter()
        self.log: list[tuple[float, float]] = []

        init = random_mapping(self.k, mesh, self.rng).indices(mesh)
        rest = np.setdiff1d(np.arange(self.n), init)
        self.rng.shuffle(rest)
        self.initial_pos = np.concatenate([init, rest]).astype(np.int64)
        self.best_pos = self.initial_pos.copy()
        self.best = self.objective.numerator(self.initial_pos)
        self.initial_value = self.best
        self._record()

    def elapsed(self) -> float:
        return float(self.spent) if self.cfg.by_iterations else time.perf_counter() - self.t0

    def exhausted(self) -> bool:
        return self.elapsed() >= self.limit

    def evaluate(self, pos: np.ndarray) -> int:
        self.spent += 1
        val = self.objective.numerator(pos)
        if val < self.best:
            self.best = val
            self.best_pos = pos.copy()
            self._record()
        return val

    def h(self, numerator: int) -> float:
        return numerator / self.length if self.length > 0 else 0.0

    def _record(self) -> None:
        self.log.append((self.elapsed(), self.h(self.best)))

    def placement(self, pos: np.ndarray, value: int) -> Placement:
        return Placement(Mapping.from_indices(pos[: self.k], self.mesh), self.h(value))

    def result(self) -> SearchResult:
        self.log.append((self.elapsed(), self.h(self.best)))
        return SearchResult(
            placement=self.placement(self.best_pos, self.best),
            initial=self.placement(self.initial_pos, self.initial_value),
            log=tuple(self.log),
            evaluations=self.spent,
        )

    @property
    def movable(self) -> bool:
        return self.k > 0 and self.n > 1

    def random_move(self) -> tuple[int, int]:
        """Two distinct slots, the first a real partition."""
        a = int(self.rng.integers(self.k))
        b = int(self.rng.integers(self.n - 1))
        return a, b + 1 if b >= a else b


def _swap(pos: np.ndarray, a: int, b: int) -> None:
    pos[a], pos[b] = pos[b], pos[a]


def search_sa(
    comm: CommMatrix,
    mesh: MeshTopology,
    cfg: SearchConfig,
    on_accept: Callable[[float], None] | None = None,
) -> SearchResult:
    """Simulated annealing with geometric cooling; returns the best-ever placement.

    Downhill moves are always taken, uphill ones with probability
    ``exp(-dH / T)``. Falling below ``t_final`` reheats to ``t_initial``.
    ``on_accept`` receives the current H after every accepted move.
    """
    s = _Search(comm, mesh, cfg)
    if not s.movable or s.exhausted():
        return s.result()
    p = cfg.sa
    scale = s.length if s.length > 0 else 1
    pos = s.initial_pos.copy()
    cur = s.initial_value

    t_init = p.t_initial if p.t_initial is not None else _calibrate_t0(s, pos, cur, scale)
    t_final = p.t_final if p.t_final is not None else t_init * 1e-3
    per_temp = p.moves_per_temp or 10 * s.k
    temp = t_init
    while not s.exhausted():
        for _ in range(per_temp):
            if s.exhausted():
                break
            a, b = s.random_move()
            _swap(pos, a, b)
            new = s.evaluate(pos)
            delta = (new - cur) / scale
            if delta <= 0 or (temp > 0 and s.rng.random() < math.exp(-delta / temp)):
                cur = new
                if on_accept is not None:
                    on_accept(s.h(cur))
            else:
                _swap(pos, a, b)
        temp *= p.cooling_ratio
        if temp < t_final:
            temp = t_init
    return s.result()


def _calibrate_t0(s: _Search, pos: np.ndarray, cur: int, scale: int, samples: int = 64) -> float:
    uphill = []
    probe = pos.copy()
    for _ in range(samples):
        a, b = s.random_move()
        _swap(probe, a, b)
        d = s.objective.numerator(probe) - cur
        _swap(probe, a, b)
        if d > 0:
            uphill.append(d / scale)
    if not uphill:
        return 1.0
    return -float(np.median(uphill)) / math.log(0.8)


def search_tabu(comm: CommMatrix, mesh: MeshTopology, cfg: SearchConfig) -> SearchResult:
    """Tabu search over sampled swap neighbourhoods.

    A recently used slot pair stays tabu for ``tenure`` iterations unless
    taking it would beat the best H found so far (aspiration).
    """
    s = _Search(comm, mesh, cfg)
    if not s.movable or s.exhausted():
        return s.result()
    moves = [(a, b) for a in range(s.k) for b in range(a + 1, s.n)]
    sample = min(len(moves), cfg.tabu.neighborhood_sample or 200)
    tenure = cfg.tabu.tenure if cfg.tabu.tenure is not None else 7 + s.k // 10
    tenure = min(tenure, len(moves) // 2)
    tabu: deque[tuple[int, int]] = deque(maxlen=tenure) if tenure > 0 else deque(maxlen=0)

    pos = s.initial_pos.copy()
    while not s.exhausted():
        if sample == len(moves):
            candidates = moves
        else:
            picks = s.rng.choice(len(moves), size=sample, replace=False)
            candidates = [moves[i] for i in picks]
        chosen = fallback = None
        best_before = s.best
        for a, b in candidates:
            if s.exhausted():
                break
            _swap(pos, a, b)
            val = s.evaluate(pos)
            _swap(pos, a, b)
            if fallback is None or val < fallback[0]:
                fallback = (val, a, b)
            allowed = (a, b) not in tabu or val < best_before
            if allowed and (chosen is None or val < chosen[0]):
                chosen = (val, a, b)
        pick = chosen or fallback
        if pick is None:
            break
        _, a, b = pick
        _swap(pos, a, b)
        tabu.append((a, b))
    return s.result()


def _swap_sequence(src_pos: np.ndarray, dst_pos: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Slot swaps turning ``src_pos`` into a permutation that agrees on the first ``k`` slots."""
    pos = src_pos.copy()
    owner = np.empty_like(pos)
    owner[pos] = np.arange(len(pos))
    seq = []
    for a in range(k):
        target = dst_pos[a]
        if pos[a] == target:
            continue
        b = int(owner[target])
        seq.append((a, b))
        owner[pos[a]], owner[target] = b, a
        pos[a], pos[b] = pos[b], pos[a]
    return seq


def search_pso(comm: CommMatrix, mesh: MeshTopology, cfg: SearchConfig) -> SearchResult:
    """Discrete particle swarm over permutations with swap-list velocities.

    Each step a particle keeps every swap of its old velocity with probability
    ``inertia`` and adopts each swap toward its personal best and toward the
    global best with probabilities ``c_personal`` and ``c_global``. A particle
    whose new velocity is empty takes one random swap instead.
    """
    s = _Search(comm, mesh, cfg)
    if not s.movable or s.exhausted():
        return s.result()
    p = cfg.pso
    rng = s.rng

    swarm = [s.initial_pos.copy()]
    for _ in range(p.swarm_size - 1):
        swarm.append(rng.permutation(s.n).astype(np.int64))
    values = [s.initial_value]
    for x in swarm[1:]:
        if s.exhausted():
            return s.result()
        values.append(s.evaluate(x))
    pbest = [x.copy() for x in swarm]
    pbest_val = list(values)
    velocity: list[list[tuple[int, int]]] = [[] for _ in swarm]

    while not s.exhausted():
        gbest = s.best_pos.copy()
        for i, x in enumerate(swarm):
            if s.exhausted():
                break
            v = [m for m in velocity[i] if rng.random() < p.inertia]
            v += [m for m in _swap_sequence(x, pbest[i], s.k) if rng.random() < p.c_personal]
            v += [m for m in _swap_sequence(x, gbest, s.k) if rng.random() < p.c_global]
            if not v:
                v = [s.random_move()]
            v = v[: s.n]
            for a, b in v:
                _swap(x, a, b)
            velocity[i] = v
            val = s.evaluate(x)
            if val < pbest_val[i]:
                pbest_val[i] = val
                pbest[i] = x.copy()
    return s.result()


SEARCHERS: dict[str, Callable[[CommMatrix, MeshTopology, SearchConfig], SearchResult]] = {
    "sa": search_sa,
    "pso": search_pso,
    "tabu": search_tabu,
}


def search(comm: CommMatrix, mesh: MeshTopology, cfg: SearchConfig) -> SearchResult:
    """Run ``cfg.algorithm``; the result carries the (elapsed, best H) log."""
    try:
        fn = SEARCHERS[cfg.algorithm]
    except KeyError:
        raise ModelError(f"unknown algorithm {cfg.algorithm!r}") from None
    return fn(comm, mesh, cfg)

