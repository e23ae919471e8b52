"""Trace-driven 2D-mesh NoC simulator with XY routing.

Each inter-core spike becomes a single-flit packet. Flits advance one
directed link per ``hop_latency`` cycles; every link forwards at most
``edge_capacity`` flits per cycle and the rest wait in FIFO order (ties by
trace order). Spikes between neurons on the same core never enter the mesh.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .model import Mapping, MeshTopology, ModelError, Partitioning, SpikeTrace

Coord = tuple[int, int]
Link = tuple[Coord, Coord]

EAST, WEST, NORTH, SOUTH = (1, 0), (-1, 0), (0, 1), (0, -1)
DIRECTIONS = (EAST, WEST, NORTH, SOUTH)
INJECTION_PORT = -2


def route_xy(s: Sequence[int], d: Sequence[int]) -> list[Link]:
    """Directed links visited going from ``s`` to ``d``: X first, then Y."""
    x, y = int(s[0]), int(s[1])
    path: list[Link] = []
    step = 1 if d[0] > x else -1
    while x != d[0]:
        path.append(((x, y), (x + step, y)))
        x += step
    step = 1 if d[1] > y else -1
    while y != d[1]:
        path.append(((x, y), (x, y + step)))
        y += step
    return path


def mesh_links(mesh: MeshTopology) -> list[Link]:
    """All directed links, ordered by source core (row-major) then E, W, N, S."""
    links = []
    for c in range(mesh.num_cores):
        x, y = mesh.coord(c)
        for dx, dy in DIRECTIONS:
            if mesh.contains((x + dx, y + dy)):
                links.append(((x, y), (x + dx, y + dy)))
    return links


@dataclass(frozen=True)
class EnergyParams:
    e_link: float = 1.0
    e_router: float = 1.0

    @property
    def per_hop(self) -> float:
        return self.e_link + self.e_router


@dataclass(frozen=True)
class SimOptions:
    """Timing knobs.

    ``injection_capacity`` caps how many flits a core may push into the mesh
    per cycle; ``None`` mirrors the mesh edge capacity and ``math.inf``
    removes the cap. With ``recount_congestion`` a flit adds one to the
    congestion count for every cycle it is held back; otherwise once per
    link it waits at. A core's injection port counts as a link here, so
    ``congestion_count`` includes ``injection_stalls``.
    """

    hop_latency: int = 1
    cycles_per_timestep: int = 1
    injection_capacity: float | None = None
    recount_congestion: bool = True

    def __post_init__(self):
        if self.hop_latency < 1 or self.cycles_per_timestep < 1:
            raise ModelError("hop_latency and cycles_per_timestep must be >= 1")
        if self.injection_capacity is not None and self.injection_capacity < 1:
            raise ModelError("injection_capacity must be >= 1")


METRIC_FIELDS = (
    "average_hop",
    "average_latency",
    "dynamic_energy",
    "congestion_count",
    "edge_variance",
    "spikes_injected",
    "spikes_delivered",
    "intercore_spikes",
    "intercore_average_hop",
    "injection_stalls",
    "total_hops",
    "cycles",
)


@dataclass(frozen=True)
class MetricsReport:
    average_hop: float
    average_latency: float
    dynamic_energy: float
    congestion_count: int
    edge_variance: float
    spikes_injected: int
    spikes_delivered: int
    intercore_spikes: int
    intercore_average_hop: float
    injection_stalls: int
    total_hops: int
    cycles: int
    links: tuple[Link, ...] = field(default=(), repr=False)
    edge_totals: tuple[int, ...] = field(default=(), repr=False)
    workload: str = ""
    mesh: str = ""

    def metrics(self) -> dict[str, float | int]:
        return {k: getattr(self, k) for k in METRIC_FIELDS}

    def to_json(self, meta: dict | None = None) -> dict:
        doc = {
            "metrics": self.metrics(),
            "edge_histogram": [
                {"src": list(a), "dst": list(b), "hops": n} for (a, b), n in zip(self.links, self.edge_totals)
            ],
            "workload": self.workload,
            "mesh": self.mesh,
        }
        if meta:
            doc["meta"] = meta
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "MetricsReport":
        hist = doc.get("edge_histogram", [])
        links = tuple((tuple(e["src"]), tuple(e["dst"])) for e in hist)
        totals = tuple(int(e["hops"]) for e in hist)
        return cls(**doc["metrics"], links=links, edge_totals=totals,
                   workload=doc.get("workload", ""), mesh=doc.get("mesh", ""))


@dataclass(frozen=True, eq=False)
class FlitLog:
    """Per inter-core flit, in trace order."""

    event: np.ndarray
    inject: np.ndarray
    deliver: np.ndarray
    src_core: np.ndarray
    dst_core: np.ndarray
    hops: np.ndarray

    @property
    def latency(self) -> np.ndarray:
        return self.deliver - self.inject


@dataclass(frozen=True, eq=False)
class SimResult:
    report: MetricsReport
    flits: FlitLog


def _core_indices(trace: SpikeTrace, part: Partitioning, mapping: Mapping, mesh: MeshTopology):
    if trace.length and max(int(trace.src.max()), int(trace.dst.max())) >= part.num_neurons:
        raise ModelError("trace references a neuron outside the partitioning")
    if mapping.k < part.k:
        raise ModelError(f"mapping covers {mapping.k} partitions, partitioning has {part.k}")
    mapping.validate(mesh)
    core_of_part = mapping.indices(mesh)
    return core_of_part[part.assignment[trace.src]], core_of_part[part.assignment[trace.dst]]


def run_simulation(
    trace: SpikeTrace,
    part: Partitioning,
    mapping: Mapping,
    mesh: MeshTopology,
    energy: EnergyParams = EnergyParams(),
    options: SimOptions = SimOptions(),
) -> SimResult:
    src_core, dst_core = _core_indices(trace, part, mapping, mesh)
    links = mesh_links(mesh)
    link_id = {l: i for i, l in enumerate(links)}
    n_links = len(links)
    edge_cap = math.inf if mesh.edge_capacity is None else mesh.edge_capacity
    inj_cap = edge_cap if options.injection_capacity is None else options.injection_capacity
    lat = options.hop_latency

    inter = np.flatnonzero(src_core != dst_core)
    pair_key = src_core[inter] * mesh.num_cores + dst_core[inter]
    routes: dict[int, tuple[int, ...]] = {}
    for key in np.unique(pair_key).tolist():
        s, d = divmod(key, mesh.num_cores)
        routes[key] = tuple(link_id[l] for l in route_xy(mesh.coord(s), mesh.coord(d)))

    n_flits = len(inter)
    route = [routes[k] for k in pair_key.tolist()]
    inject = (trace.timestep[inter] * options.cycles_per_timestep).tolist()
    src_list = src_core[inter].tolist()
    hop_pos = [0] * n_flits
    deliver = [0] * n_flits
    counted_at = [-1] * n_flits
    edge_totals = [0] * n_links

    # pending arrivals: cycle -> link -> flit ids (appended in increasing id order
    # within one source, so they are sorted before queueing)
    arrivals: dict[int, dict[int, list[int]]] = {}
    queues: dict[int, deque[int]] = {}
    inj_queues: dict[int, deque[int]] = {}
    congestion = 0
    inj_stalls = 0
    next_inject = 0
    cycle = inject[0] if n_flits else 0
    last_cycle = 0

    def arrive(c: int, link: int, f: int) -> None:
        arrivals.setdefault(c, {}).setdefault(link, []).append(f)

    while next_inject < n_flits or arrivals or queues or inj_queues:
        # injection stage (zero latency into the first link's queue)
        while next_inject < n_flits and inject[next_inject] == cycle:
            inj_queues.setdefault(src_list[next_inject], deque()).append(next_inject)
            next_inject += 1
        for core in sorted(inj_queues):
            q = inj_queues[core]
            sent = 0
            while q and sent < inj_cap:
                f = q.popleft()
                arrive(cycle, route[f][0], f)
                sent += 1
            if not q:
                del inj_queues[core]
                continue
            inj_stalls += len(q)
            if options.recount_congestion:
                congestion += len(q)
            else:
                for f in q:
                    if counted_at[f] != INJECTION_PORT:
                        counted_at[f] = INJECTION_PORT
                        congestion += 1

        # link stage
        for link, fs in sorted(arrivals.pop(cycle, {}).items()):
            fs.sort()
            queues.setdefault(link, deque()).extend(fs)
        for link in sorted(queues):
            q = queues[link]
            sent = 0
            while q and sent < edge_cap:
                f = q.popleft()
                sent += 1
                edge_totals[link] += 1
                hop_pos[f] += 1
                if hop_pos[f] == len(route[f]):
                    deliver[f] = cycle + lat
                    last_cycle = max(last_cycle, cycle + lat)
                else:
                    arrive(cycle + lat, route[f][hop_pos[f]], f)
            if not q:
                del queues[link]
            elif options.recount_congestion:
                congestion += len(q)
            else:
                for f in q:
                    if counted_at[f] != hop_pos[f]:
                        counted_at[f] = hop_pos[f]
                        congestion += 1

        if queues or inj_queues:
            cycle += 1
        else:
            upcoming = [c for c in (min(arrivals, default=None), inject[next_inject] if next_inject < n_flits else None) if c is not None]
            if not upcoming:
                break
            cycle = min(upcoming)

    hops = np.array([len(r) for r in route], dtype=np.int64)
    total_hops = int(hops.sum())
    inject_arr = np.array(inject, dtype=np.int64)
    deliver_arr = np.array(deliver, dtype=np.int64)
    n = trace.length
    totals = np.array(edge_totals, dtype=np.int64)
    report = MetricsReport(
        average_hop=total_hops / n if n else 0.0,
        average_latency=float((deliver_arr - inject_arr).mean()) if n_flits else 0.0,
        dynamic_energy=total_hops * energy.per_hop,
        congestion_count=congestion,
        edge_variance=float(totals.var()) if n_links else 0.0,
        spikes_injected=n,
        spikes_delivered=n - n_flits + int(np.count_nonzero(np.array(hop_pos, dtype=np.int64) == hops)),
        intercore_spikes=n_flits,
        intercore_average_hop=total_hops / n_flits if n_flits else 0.0,
        injection_stalls=inj_stalls,
        total_hops=total_hops,
        cycles=last_cycle,
        links=tuple(links),
        edge_totals=tuple(edge_totals),
        workload=trace.fingerprint(),
        mesh=mesh.label(),
    )
    log = FlitLog(
        event=inter.astype(np.int64),
        inject=inject_arr,
        deliver=deliver_arr,
        src_core=src_core[inter],
        dst_core=dst_core[inter],
        hops=hops,
    )
    return SimResult(report, log)


def simulate(
    trace: SpikeTrace,
    part: Partitioning,
    mapping: Mapping,
    mesh: MeshTopology,
    energy: EnergyParams = EnergyParams(),
    options: SimOptions = SimOptions(),
) -> MetricsReport:
    return run_simulation(trace, part, mapping, mesh, energy, options).report


def edge_histogram(result: SimResult | MetricsReport) -> np.ndarray:
    """Cumulative traversals per directed link, in ``mesh_links`` order."""
    report = result.report if isinstance(result, SimResult) else result
    return np.array(report.edge_totals, dtype=np.int64)


def options_dict(options: SimOptions, energy: EnergyParams) -> dict:
    d = asdict(options)
    if d["injection_capacity"] == math.inf:
        d["injection_capacity"] = "inf"
    d.update(asdict(energy))
    return d
