"""Multi-level k-way partitioning of spike-traffic graphs under core capacity.

The pipeline is the classic three-phase scheme:

1. coarsen: heavy-edge matching folds vertex pairs until the graph is small;
2. initial_partition: greedy region growing on the coarsest graph;
3. uncoarsen_refine: project back level by level, running single-queue
   boundary refinement (gain = ED - ID) with an undo window at each level.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ModelError, Partitioning, SnnGraph, cut_weight

DEFAULT_UNDO_WINDOW = 50
MIN_SHRINK = 0.10
COARSEST_PER_PART = 30


class InfeasibleError(ModelError):
    """The vertices cannot be packed into ``k`` partitions of the given capacity."""


@dataclass(frozen=True, eq=False)
class CoarseLevel:
    """One level of the coarsening hierarchy.

    ``fold_map[c]`` lists the vertices of the next-finer level folded into
    coarse vertex ``c``; ``coarse_of`` is its inverse. Level 0 is the input
    graph with an identity fold map.
    """

    graph: SnnGraph
    fold_map: tuple[tuple[int, ...], ...]
    coarse_of: np.ndarray


def _identity_level(graph: SnnGraph) -> CoarseLevel:
    n = graph.num_neurons
    return CoarseLevel(graph, tuple((v,) for v in range(n)), np.arange(n, dtype=np.int64))


def heavy_edge_matching(graph: SnnGraph, order: Sequence[int], max_vertex_weight: int | None = None) -> np.ndarray:
    """Return ``match[v]`` (``v`` itself when left solitary).

    Vertices are visited in ``order``; each unmatched vertex pairs with the
    unmatched neighbour across its heaviest edge, lowest id on ties.
    """
    adj = graph.adjacency
    vw = graph.vertex_weight.tolist()
    match = [-1] * graph.num_neurons
    for v in order:
        if match[v] != -1:
            continue
        best, best_w = -1, 0
        room = None if max_vertex_weight is None else max_vertex_weight - vw[v]
        for u, w in adj[v].items():
            if match[u] != -1 or (room is not None and vw[u] > room):
                continue
            if w > best_w or (w == best_w and u < best):
                best, best_w = u, w
        if best < 0:
            match[v] = v
        else:
            match[v] = best
            match[best] = v
    return np.array(match, dtype=np.int64)


def contract(graph: SnnGraph, match: np.ndarray) -> CoarseLevel:
    """Fold matched pairs into single vertices, summing weights."""
    n = graph.num_neurons
    coarse_of = np.full(n, -1, dtype=np.int64)
    groups: list[tuple[int, ...]] = []
    for v in range(n):
        if coarse_of[v] >= 0:
            continue
        m = int(match[v])
        coarse_of[v] = len(groups)
        if m != v:
            coarse_of[m] = len(groups)
            groups.append((v, m))
        else:
            groups.append((v,))
    nc = len(groups)
    vw = np.bincount(coarse_of, weights=graph.vertex_weight, minlength=nc).astype(np.int64)

    ci, cj = coarse_of[graph.src], coarse_of[graph.dst]
    keep = ci != cj
    lo = np.minimum(ci[keep], cj[keep])
    hi = np.maximum(ci[keep], cj[keep])
    keys, inv = np.unique(lo * nc + hi, return_inverse=True)
    w = np.bincount(inv, weights=graph.weight[keep], minlength=len(keys)).astype(np.int64)
    edges = np.stack([keys // nc, keys % nc, w], axis=1) if len(keys) else np.empty((0, 3), dtype=np.int64)
    coarse = SnnGraph.from_edges(nc, edges, vertex_weight=vw)
    return CoarseLevel(coarse, tuple(groups), coarse_of)


def coarsen(
    graph: SnnGraph,
    stop_size: int,
    seed: int = 0,
    max_vertex_weight: int | None = None,
) -> list[CoarseLevel]:
    """Build the hierarchy ``G_0 ... G_c`` by repeated heavy-edge matching.

    Stops once a level has at most ``stop_size`` vertices or a matching
    round would shrink the graph by less than 10%.
    """
    rng = np.random.default_rng(seed)
    levels = [_identity_level(graph)]
    while levels[-1].graph.num_neurons > stop_size:
        g = levels[-1].graph
        order = rng.permutation(g.num_neurons).tolist()
        level = contract(g, heavy_edge_matching(g, order, max_vertex_weight))
        if level.graph.num_neurons > (1.0 - MIN_SHRINK) * g.num_neurons:
            break
        levels.append(level)
    return levels


def project(level: CoarseLevel, coarse_assignment: np.ndarray) -> np.ndarray:
    """Carry a partition vector from ``level``'s graph down to the finer one."""
    return np.asarray(coarse_assignment)[level.coarse_of]


def _check_feasible(graph: SnnGraph, k: int, capacity: int) -> None:
    if k < 1:
        raise ModelError("k must be >= 1")
    total = graph.total_vertex_weight
    if total > k * capacity:
        raise InfeasibleError(f"total weight {total} exceeds k*capacity = {k}*{capacity}")
    if graph.num_neurons and int(graph.vertex_weight.max()) > capacity:
        raise InfeasibleError("a single vertex outweighs the core capacity")


def _place_leftovers(vw: np.ndarray, assign: np.ndarray, loads: np.ndarray, capacity: int) -> None:
    left = np.flatnonzero(assign < 0)
    # heaviest first; each goes to the lightest partition with room
    for v in sorted(left.tolist(), key=lambda v: (-vw[v], v)):
        fits = np.flatnonzero(loads + vw[v] <= capacity)
        if not len(fits):
            raise InfeasibleError("greedy growth stranded a vertex that fits nowhere")
        p = int(fits[np.argmin(loads[fits])])
        assign[v] = p
        loads[p] += vw[v]


def initial_partition(coarse: SnnGraph, k: int, capacity: int, seed: int = 0) -> Partitioning:
    """Greedy region growing into ``k`` partitions of at most ``capacity``.

    Each partition starts from a random unassigned vertex and absorbs the
    endpoint of its heaviest frontier edge until full. Vertices the growth
    never reaches go to the lightest partition with room.
    """
    _check_feasible(coarse, k, capacity)
    rng = np.random.default_rng(seed)
    adj = coarse.adjacency
    vw = coarse.vertex_weight
    n = coarse.num_neurons
    assign = np.full(n, -1, dtype=np.int64)
    loads = np.zeros(k, dtype=np.int64)

    for p in range(k):
        free = np.flatnonzero(assign < 0)
        if not len(free):
            break
        start = int(rng.choice(free))
        assign[start] = p
        loads[p] += vw[start]
        frontier = [(-w, u) for u, w in adj[start].items()]
        heapq.heapify(frontier)
        while frontier and loads[p] < capacity:
            _, u = heapq.heappop(frontier)
            if assign[u] >= 0 or loads[p] + vw[u] > capacity:
                continue
            assign[u] = p
            loads[p] += vw[u]
            for nb, w in adj[u].items():
                if assign[nb] < 0:
                    heapq.heappush(frontier, (-w, nb))

    _place_leftovers(vw, assign, loads, capacity)
    return Partitioning.build(assign, k, capacity, vertex_weight=vw)


def random_partition(graph: SnnGraph, k: int, capacity: int, seed: int = 0) -> Partitioning:
    """Seeded balanced random assignment (round-robin over a shuffled order)."""
    _check_feasible(graph, k, capacity)
    rng = np.random.default_rng(seed)
    vw = graph.vertex_weight
    assign = np.full(graph.num_neurons, -1, dtype=np.int64)
    loads = np.zeros(k, dtype=np.int64)
    for v in rng.permutation(graph.num_neurons).tolist():
        fits = np.flatnonzero(loads + vw[v] <= capacity)
        if not len(fits):
            raise InfeasibleError("random packing failed; vertex weights too coarse for capacity")
        p = int(fits[np.argmin(loads[fits])])
        assign[v] = p
        loads[p] += vw[v]
    return Partitioning.build(assign, k, capacity, vertex_weight=vw)


class RefinementState:
    """Partition vector plus incrementally maintained internal/external degrees.

    ``ID[v]`` is the edge weight from ``v`` into its own partition and
    ``ED[v][b]`` the weight toward each other partition ``b`` it touches.
    """

    def __init__(self, graph: SnnGraph, assignment, k: int, capacity: int):
        self.graph = graph
        self.adj = graph.adjacency
        self.vw = graph.vertex_weight.tolist()
        self.k = k
        self.capacity = capacity
        self.D: list[int] = [int(p) for p in assignment]
        self.loads = [0] * k
        for v, p in enumerate(self.D):
            self.loads[p] += self.vw[v]
        self.ID = [0] * graph.num_neurons
        self.ED: list[dict[int, int]] = [{} for _ in range(graph.num_neurons)]
        cut2 = 0
        for v, nbrs in enumerate(self.adj):
            pv = self.D[v]
            ed = self.ED[v]
            for u, w in nbrs.items():
                pu = self.D[u]
                if pu == pv:
                    self.ID[v] += w
                else:
                    ed[pu] = ed.get(pu, 0) + w
                    cut2 += w
        self.cut = cut2 // 2

    def eligible(self, v: int) -> bool:
        ed = self.ED[v]
        return bool(ed) and sum(ed.values()) >= self.ID[v]

    def best_target(self, v: int) -> int:
        """Boundary partition with maximum external degree (lowest id on ties)."""
        ed = self.ED[v]
        return min(ed, key=lambda b: (-ed[b], b))

    def gain(self, v: int) -> int:
        return self.ED[v][self.best_target(v)] - self.ID[v]

    def feasible_target(self, v: int) -> int | None:
        """Max-ED boundary partition that can still absorb ``v``."""
        ed = self.ED[v]
        w = self.vw[v]
        for b in sorted(ed, key=lambda b: (-ed[b], b)):
            if self.loads[b] + w <= self.capacity:
                return b
        return None

    def move(self, v: int, b: int) -> int:
        """Move ``v`` to partition ``b``; returns the cut reduction."""
        a = self.D[v]
        ed_v = self.ED[v]
        gain = ed_v.get(b, 0) - self.ID[v]
        self.cut -= gain
        self.loads[a] -= self.vw[v]
        self.loads[b] += self.vw[v]
        self.D[v] = b
        old_id = self.ID[v]
        self.ID[v] = ed_v.pop(b, 0)
        if old_id:
            ed_v[a] = old_id
        for u, w in self.adj[v].items():
            pu = self.D[u]
            ed = self.ED[u]
            if pu == a:
                self.ID[u] -= w
                ed[b] = ed.get(b, 0) + w
            elif pu == b:
                self.ID[u] += w
                _drop(ed, a, w)
            else:
                _drop(ed, a, w)
                ed[b] = ed.get(b, 0) + w
        return gain


def _drop(ed: dict[int, int], part: int, w: int) -> None:
    left = ed[part] - w
    if left:
        ed[part] = left
    else:
        del ed[part]


MoveHook = Callable[[RefinementState], None]


def refine_level(
    state: RefinementState,
    x: int = DEFAULT_UNDO_WINDOW,
    max_passes: int = 8,
    on_move: MoveHook | None = None,
) -> None:
    """Single-queue boundary refinement, in place.

    Each pass queues every vertex whose summed ED reaches its ID, keyed by
    ``max_b ED[v][b] - ID[v]``. The top vertex moves to its best partition
    with room; a moved vertex stays put for the rest of the pass. After ``x``
    consecutive moves that fail to beat the best cut the pass stops and those
    moves are rolled back.
    """
    n = state.graph.num_neurons
    for _ in range(max_passes):
        start_cut = state.cut
        locked = [False] * n
        stamp = [0] * n
        heap: list[tuple[int, int, int]] = []

        def enqueue(v: int) -> None:
            stamp[v] += 1
            if not locked[v] and state.eligible(v):
                heapq.heappush(heap, (-state.gain(v), v, stamp[v]))

        for v in range(n):
            enqueue(v)

        moves: list[tuple[int, int]] = []
        best_cut, best_len = state.cut, 0
        while heap:
            _, v, s = heapq.heappop(heap)
            if s != stamp[v] or locked[v]:
                continue
            b = state.feasible_target(v)
            if b is None:
                continue
            moves.append((v, state.D[v]))
            state.move(v, b)
            locked[v] = True
            for u in state.adj[v]:
                enqueue(u)
            if on_move is not None:
                on_move(state)
            if state.cut < best_cut:
                best_cut, best_len = state.cut, len(moves)
            elif len(moves) - best_len >= x:
                break

        for v, home in reversed(moves[best_len:]):
            state.move(v, home)
            if on_move is not None:
                on_move(state)
        if state.cut >= start_cut:
            break


LevelHook = Callable[[int, int, int], None]


def uncoarsen_refine(
    levels: Sequence[CoarseLevel],
    init: Partitioning,
    capacity: int,
    x: int = DEFAULT_UNDO_WINDOW,
    on_move: MoveHook | None = None,
    on_level: LevelHook | None = None,
) -> Partitioning:
    """Refine ``init`` on the coarsest level, then project and refine down to ``G_0``.

    ``on_level(i, projected_cut, refined_cut)`` fires once per level, from
    the coarsest (``i = len(levels) - 1``) to the input graph (``i = 0``).
    """
    k = init.k
    assign = np.asarray(init.assignment, dtype=np.int64)
    for i in range(len(levels) - 1, -1, -1):
        graph = levels[i].graph
        if i < len(levels) - 1:
            assign = project(levels[i + 1], assign)
        state = RefinementState(graph, assign, k, capacity)
        before = state.cut
        refine_level(state, x, on_move=on_move)
        if on_level is not None:
            on_level(i, before, state.cut)
        assign = np.array(state.D, dtype=np.int64)
    return Partitioning.build(assign, k, capacity, vertex_weight=levels[0].graph.vertex_weight)


def partition(
    graph: SnnGraph,
    k: int,
    capacity: int,
    seed: int = 0,
    x: int = DEFAULT_UNDO_WINDOW,
    stop_size: int | None = None,
    n_init: int = 4,
) -> Partitioning:
    """Full multi-level pipeline; deterministic for a fixed seed.

    ``n_init`` region-growing attempts run on the coarsest graph; each is
    refined all the way down and the lowest final cut wins. If no attempt packs the coarse vertices, the
    next finer level is tried, down to the input graph.
    """
    _check_feasible(graph, k, capacity)
    if k == 1:
        return Partitioning.build(np.zeros(graph.num_neurons, dtype=np.int64), 1, capacity, graph.vertex_weight)
    ss = np.random.SeedSequence(seed)
    coarsen_seed, init_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    stop = max(stop_size or 0, COARSEST_PER_PART * k)
    levels = coarsen(graph, stop, coarsen_seed, max_vertex_weight=max(1, capacity // 4))

    init_seeds = np.random.default_rng(init_seed).integers(0, 2**63 - 1, size=n_init).tolist()
    for depth in range(len(levels) - 1, -1, -1):
        coarse = levels[depth].graph
        best = None
        for s in init_seeds:
            try:
                cand = initial_partition(coarse, k, capacity, seed=s)
            except InfeasibleError:
                continue
            refined = uncoarsen_refine(levels[: depth + 1], cand, capacity, x)
            c = cut_weight(graph, refined)
            if best is None or c < best[0]:
                best = (c, refined)
        if best is not None:
            return best[1]
    raise InfeasibleError(f"could not pack {graph.num_neurons} neurons into {k} x {capacity}")
