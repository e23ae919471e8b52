"""End-to-end orchestration: workload -> partition -> map -> evaluate.

A run is described by one ``PipelineConfig``, loadable from a TOML file
whose tables (``[workload]``, ``[mesh]``, ...) are flattened onto the
config's fields. Every JSON artifact records the config hash and seeds.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from . import fileio
from .hops import average_hop
from .mapper import SearchConfig, SearchResult, random_mapping, search
from .model import (
    Mapping,
    MeshTopology,
    ModelError,
    Partitioning,
    SnnGraph,
    SpikeTrace,
    comm_matrix,
    cut_weight,
)
from .noc import EnergyParams, MetricsReport, SimOptions, options_dict, simulate
from .partition import DEFAULT_UNDO_WINDOW, partition, random_partition
from .synth import gen_feedforward, gen_random

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BASELINES = ("random_partition", "sequential_mapping", "random_mapping")
COMPARE_METRICS = ("average_hop", "average_latency", "dynamic_energy", "congestion_count", "edge_variance")


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    # workload: files, or a synthetic generator ("feedforward" | "random")
    graph: str | None = None
    trace: str | None = None
    synth: str | None = None
    layers: tuple[int, ...] = (160, 160)
    connect: str = "full"
    neurons: int = 100
    p: float = 0.1
    rate: float = 0.05
    steps: int = 1000
    # hardware
    mesh: str = "5x5"
    core_capacity: int = 256
    edge_capacity: int | None = 256
    # partition
    k: int | None = None
    undo_window: int = DEFAULT_UNDO_WINDOW
    partition_seeds: int = 1
    # map
    alg: str = "sa"
    budget: str = "10000"
    # simulate
    e_link: float = 1.0
    e_router: float = 1.0
    hop_latency: int = 1
    cycles_per_timestep: int = 1
    injection_capacity: float | None = None
    recount_congestion: bool = True
    seed: int = 0
    out_dir: str = "out"

    @classmethod
    def from_toml(cls, path, **overrides) -> "PipelineConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        flat: dict[str, Any] = {}
        for key, value in raw.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        flat.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(flat)

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ModelError(f"unknown config keys: {', '.join(unknown)}")
        if "layers" in values:
            layers = values["layers"]
            if isinstance(layers, str):
                layers = [int(v) for v in layers.split(",")]
            values = {**values, "layers": tuple(int(v) for v in layers)}
        return cls(**values)

    def mesh_topology(self) -> MeshTopology:
        return MeshTopology.parse(self.mesh, core_capacity=self.core_capacity, edge_capacity=self.edge_capacity)

    def search_config(self) -> SearchConfig:
        return SearchConfig(algorithm=self.alg, seed=self.seed, **parse_budget(self.budget))

    def sim_options(self) -> tuple[EnergyParams, SimOptions]:
        return (
            EnergyParams(self.e_link, self.e_router),
            SimOptions(self.hop_latency, self.cycles_per_timestep, self.injection_capacity, self.recount_congestion),
        )

    def as_record(self) -> dict[str, Any]:
        """Fields that determine the results (everything but ``out_dir``)."""
        d = asdict(self)
        d.pop("out_dir")
        if d["injection_capacity"] == math.inf:
            d["injection_capacity"] = "inf"
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_record(), sort_keys=True).encode()).hexdigest()[:16]


def parse_budget(text: str | int | float) -> dict[str, Any]:
    """``"5000"``/``"5000it"`` -> evaluation count, ``"30s"`` -> wall-clock seconds."""
    s = str(text).strip().lower()
    try:
        if s.endswith("s"):
            return {"time_budget": float(s[:-1])}
        if s.endswith("it"):
            s = s[:-2]
        return {"iterations": int(s)}
    except ValueError:
        raise ModelError(f"budget must look like '5000' (iterations) or '30s', got {text!r}") from None


@dataclass(frozen=True)
class Workload:
    graph: SnnGraph
    trace: SpikeTrace


def load_workload(cfg: PipelineConfig) -> Workload:
    if cfg.synth is not None:
        if cfg.synth == "feedforward":
            g, t = gen_feedforward(cfg.layers, cfg.connect, cfg.rate, cfg.steps, cfg.seed)
        elif cfg.synth == "random":
            g, t = gen_random(cfg.neurons, cfg.p, cfg.rate, cfg.steps, cfg.seed)
        else:
            raise ModelError(f"unknown synth kind {cfg.synth!r}")
        return Workload(g, t)
    if cfg.trace is None:
        raise ModelError("the pipeline needs a trace file (or a synth spec)")
    graph = fileio.load_graph(cfg.graph) if cfg.graph else None
    trace = fileio.load_trace(cfg.trace, graph)
    if graph is None:
        n = int(max(trace.src.max(), trace.dst.max())) + 1 if trace.length else 0
        graph = trace.to_graph(n)
    return Workload(graph, trace)


def partition_count(graph: SnnGraph, cfg: PipelineConfig, mesh: MeshTopology) -> int:
    k = cfg.k if cfg.k is not None else max(1, math.ceil(graph.total_vertex_weight / cfg.core_capacity))
    if k > mesh.num_cores:
        raise ModelError(
            f"{k} partitions exceed the {mesh.num_cores} cores of a {mesh.label()} mesh; "
            "use a larger mesh or a larger core capacity (multi-round mapping is not supported)"
        )
    return k


def best_partition(graph: SnnGraph, k: int, capacity: int, seeds: Sequence[int], x: int) -> tuple[Partitioning, int]:
    """Partition once per seed and keep the smallest cut (earliest seed on ties)."""
    best = None
    for s in seeds:
        part = partition(graph, k, capacity, seed=s, x=x)
        cut = cut_weight(graph, part)
        if best is None or cut < best[1]:
            best = (part, cut, s)
    return best[0], best[2]


def sequential_mapping(k: int, mesh: MeshTopology) -> Mapping:
    """Partitions on cores in row-major order."""
    if k > mesh.num_cores:
        raise ModelError(f"{k} partitions do not fit on {mesh.num_cores} cores")
    return Mapping.from_indices(range(k), mesh)


@dataclass(frozen=True)
class PipelineResult:
    report: MetricsReport
    partitioning: Partitioning
    mapping: Mapping
    search: SearchResult | None
    cut: int
    H: float
    paths: dict[str, str] = field(default_factory=dict)


@contextmanager
def _stage(name: str):
    try:
        yield
    except (ModelError, OSError) as exc:
        raise StageError(name, str(exc)) from exc


def write_convergence(log, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["elapsed", "best_H"])
        for elapsed, h in log:
            w.writerow([repr(float(elapsed)), repr(float(h))])


def _meta(cfg: PipelineConfig, stage: str, **extra) -> dict[str, Any]:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, "stage": stage, **extra}


def run_pipeline(cfg: PipelineConfig, write: bool = True) -> PipelineResult:
    """Partition, map and simulate; writes the four stage artifacts to ``cfg.out_dir``."""
    with _stage("workload"):
        wl = load_workload(cfg)
        mesh = cfg.mesh_topology()
    with _stage("partition"):
        k = partition_count(wl.graph, cfg, mesh)
        seeds = [cfg.seed + i for i in range(max(1, cfg.partition_seeds))]
        part, used_seed = best_partition(wl.graph, k, cfg.core_capacity, seeds, cfg.undo_window)
        cut = cut_weight(wl.graph, part)
    with _stage("map"):
        comm = comm_matrix(wl.trace, part)
        result = search(comm, mesh, cfg.search_config())
        mapping = result.placement.mapping
    with _stage("evaluate"):
        H = average_hop(comm, mapping) if wl.trace.length else 0.0
        energy, options = cfg.sim_options()
        report = simulate(wl.trace, part, mapping, mesh, energy, options)

    paths: dict[str, str] = {}
    if write:
        with _stage("write"):
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            paths = {
                "partitioning": str(out / "partitioning.json"),
                "mapping": str(out / "mapping.json"),
                "convergence": str(out / "convergence.csv"),
                "metrics": str(out / "metrics.json"),
            }
            fileio.save_partitioning(
                part, paths["partitioning"], _meta(cfg, "partition", partition_seed=used_seed, cut=cut)
            )
            fileio.save_mapping(
                mapping, paths["mapping"], mesh, _meta(cfg, "map", algorithm=cfg.alg, budget=cfg.budget, H=H)
            )
            write_convergence(result.log, paths["convergence"])
            fileio.dump_json(
                report.to_json(_meta(cfg, "evaluate", config=cfg.as_record(), sim=options_dict(options, energy))),
                paths["metrics"],
            )
    return PipelineResult(report, part, mapping, result, cut, H, paths)


def run_baseline(cfg: PipelineConfig, kind: str) -> PipelineResult:
    """Evaluate an internal baseline with the same simulator.

    ``random_partition`` swaps the partitioner for a balanced random split
    (mapping still searched); the two mapping baselines keep the partitioner
    and replace the search with row-major or random placement.
    """
    if kind not in BASELINES:
        raise StageError("baseline", f"unknown baseline {kind!r}; choose from {', '.join(BASELINES)}")
    with _stage("workload"):
        wl = load_workload(cfg)
        mesh = cfg.mesh_topology()
    with _stage("partition"):
        k = partition_count(wl.graph, cfg, mesh)
        if kind == "random_partition":
            part = random_partition(wl.graph, k, cfg.core_capacity, seed=cfg.seed)
        else:
            seeds = [cfg.seed + i for i in range(max(1, cfg.partition_seeds))]
            part, _ = best_partition(wl.graph, k, cfg.core_capacity, seeds, cfg.undo_window)
    with _stage("map"):
        comm = comm_matrix(wl.trace, part)
        result = None
        if kind == "random_partition":
            result = search(comm, mesh, cfg.search_config())
            mapping = result.placement.mapping
        elif kind == "sequential_mapping":
            mapping = sequential_mapping(k, mesh)
        else:
            mapping = random_mapping(k, mesh, cfg.seed)
    with _stage("evaluate"):
        H = average_hop(comm, mapping) if wl.trace.length else 0.0
        energy, options = cfg.sim_options()
        report = simulate(wl.trace, part, mapping, mesh, energy, options)
    return PipelineResult(report, part, mapping, result, cut_weight(wl.graph, part), H)


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    raw: tuple[dict[str, float], ...]
    normalized: tuple[dict[str, float | None], ...]

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for name, raw, norm in zip(self.names, self.raw, self.normalized):
            row: dict[str, Any] = {"run": name}
            for m in COMPARE_METRICS:
                row[m] = raw[m]
                row[f"{m}_norm"] = norm[m]
            out.append(row)
        return out

    def to_json(self) -> dict[str, Any]:
        return {"metrics": list(COMPARE_METRICS), "baseline": self.names[0], "rows": self.rows()}

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def _ratio(value: float, base: float) -> float | None:
    if base == 0:
        return 1.0 if value == 0 else None
    return value / base


def report_compare(runs: Sequence[MetricsReport], names: Sequence[str] | None = None) -> Comparison:
    """Divide each metric by the first run's value."""
    if len(runs) < 2:
        raise ModelError("comparison needs at least two runs")
    first = runs[0]
    for r in runs[1:]:
        if (r.workload, r.mesh) != (first.workload, first.mesh):
            raise ModelError(
                f"mismatched workloads: {first.workload}@{first.mesh} vs {r.workload}@{r.mesh}"
            )
    names = tuple(names) if names is not None else tuple(f"run{i}" for i in range(len(runs)))
    raw = tuple({m: getattr(r, m) for m in COMPARE_METRICS} for r in runs)
    norm = tuple({m: _ratio(row[m], raw[0][m]) for m in COMPARE_METRICS} for row in raw)
    return Comparison(names, raw, norm)


def load_report(path) -> MetricsReport:
    return MetricsReport.from_json(fileio.read_json(path))

