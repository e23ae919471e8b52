"""Command-line entry point: ``snnmap <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import fileio
from .hops import average_hop
from .mapper import ALGORITHMS, SearchConfig, search
from .model import MeshTopology, ModelError, comm_matrix, cut_weight
from .noc import EnergyParams, SimOptions, options_dict, simulate
from .partition import DEFAULT_UNDO_WINDOW, partition
from .pipeline import (
    BASELINES,
    PipelineConfig,
    StageError,
    load_report,
    parse_budget,
    report_compare,
    run_baseline,
    run_pipeline,
    write_convergence,
)
from .synth import gen_feedforward, gen_random


def _capacity(text: str) -> int | None:
    if text.lower() in ("inf", "none", "unbounded"):
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("capacity must be >= 1 or 'inf'")
    return value


def _injection(text: str) -> float | None:
    if text.lower() == "edge":
        return None
    if text.lower() == "inf":
        return math.inf
    return int(text)


def cmd_synth(args) -> None:
    if args.kind == "feedforward":
        layers = [int(v) for v in args.layers.split(",")]
        graph, trace = gen_feedforward(layers, args.connect, args.rate, args.steps, args.seed)
    else:
        graph, trace = gen_random(args.neurons, args.p, args.rate, args.steps, args.seed)
    fileio.save_graph(graph, args.out_graph)
    fileio.save_trace(trace, args.out_trace)
    print(f"neurons={graph.num_neurons} edges={graph.num_edges} spikes={trace.length}")


def _partition_job(job):
    graph_path, k, capacity, seed, x = job
    graph = fileio.load_graph(graph_path)
    part = partition(graph, k, capacity, seed=seed, x=x)
    return cut_weight(graph, part), seed, part


def cmd_partition(args) -> None:
    graph = fileio.load_graph(args.graph)
    seeds = [args.seed + i for i in range(args.seeds)]
    if args.jobs > 1 and len(seeds) > 1:
        jobs = [(args.graph, args.k, args.capacity, s, args.undo_window) for s in seeds]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_partition_job, jobs))
    else:
        results = []
        for s in seeds:
            part = partition(graph, args.k, args.capacity, seed=s, x=args.undo_window)
            results.append((cut_weight(graph, part), s, part))
    cut, seed, part = min(results, key=lambda r: (r[0], r[1]))
    meta = {"seed": seed, "seeds": seeds, "undo_window": args.undo_window, "cut": cut}
    fileio.save_partitioning(part, args.out, meta)
    print(f"cut={cut} seed={seed}")


def cmd_map(args) -> None:
    part = fileio.load_partitioning(args.partitioning)
    trace = fileio.load_trace(args.trace)
    mesh = MeshTopology.parse(args.mesh)
    cfg = SearchConfig(algorithm=args.alg, seed=args.seed, **parse_budget(args.budget))
    result = search(comm_matrix(trace, part), mesh, cfg)
    meta = {"algorithm": args.alg, "budget": args.budget, "seed": args.seed, "H": result.placement.H,
            "initial_H": result.initial.H}
    fileio.save_mapping(result.placement.mapping, args.out, mesh, meta)
    if args.log:
        write_convergence(result.log, args.log)
    print(f"H={result.placement.H!r} initial_H={result.initial.H!r}")


def cmd_eval_hop(args) -> None:
    part = fileio.load_partitioning(args.partitioning)
    mapping = fileio.load_mapping(args.mapping)
    trace = fileio.load_trace(args.trace)
    print(repr(average_hop(comm_matrix(trace, part), mapping)))


def cmd_simulate(args) -> None:
    part = fileio.load_partitioning(args.partitioning)
    mapping = fileio.load_mapping(args.mapping)
    trace = fileio.load_trace(args.trace)
    mesh = MeshTopology.parse(args.mesh, edge_capacity=args.edge_capacity)
    energy = EnergyParams(args.e_link, args.e_router)
    options = SimOptions(args.hop_latency, args.cycles_per_timestep, args.injection_capacity, not args.count_once)
    report = simulate(trace, part, mapping, mesh, energy, options)
    doc = report.to_json({"sim": options_dict(options, energy), "edge_capacity": args.edge_capacity})
    if args.out:
        fileio.dump_json(doc, args.out)
    print(json.dumps(report.metrics(), sort_keys=True))


def _config(args) -> PipelineConfig:
    overrides = {"seed": args.seed, "out_dir": args.out_dir, "alg": args.alg, "budget": args.budget,
                 "k": args.k, "mesh": args.mesh}
    if args.config:
        return PipelineConfig.from_toml(args.config, **overrides)
    return PipelineConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_pipeline(args) -> None:
    res = run_pipeline(_config(args))
    for name, path in res.paths.items():
        print(f"{name}: {path}")
    print(json.dumps(res.report.metrics(), sort_keys=True))


def cmd_baseline(args) -> None:
    cfg = _config(args)
    res = run_baseline(cfg, args.kind)
    out = Path(args.out) if args.out else Path(cfg.out_dir) / f"baseline-{args.kind}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.dump_json(res.report.to_json({"baseline": args.kind, "config_hash": cfg.digest(), "seed": cfg.seed}), out)
    print(f"{args.kind}: {out}")
    print(json.dumps(res.report.metrics(), sort_keys=True))


def cmd_compare(args) -> None:
    reports = [load_report(p) for p in args.reports]
    names = args.names.split(",") if args.names else [Path(p).stem for p in args.reports]
    table = report_compare(reports, names)
    if args.out:
        table.write_csv(args.out)
    if args.out_json:
        fileio.dump_json(table.to_json(), args.out_json)
    print(json.dumps(table.to_json(), indent=2))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snnmap", description="Partition, place and evaluate SNNs on 2D-mesh NoCs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic graph + spike trace")
    p.add_argument("kind", choices=["feedforward", "random"])
    p.add_argument("--layers", default="320,320")
    p.add_argument("--connect", default="full", help="'full' or 'random:<p>'")
    p.add_argument("--neurons", type=int, default=100)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-trace", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="multi-level k-way partitioning")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--capacity", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="try this many consecutive seeds, keep the best cut")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--undo-window", type=int, default=DEFAULT_UNDO_WINDOW)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("map", help="place partitions on mesh cores")
    p.add_argument("--trace", required=True)
    p.add_argument("--partitioning", required=True)
    p.add_argument("--mesh", default="5x5")
    p.add_argument("--alg", choices=ALGORITHMS, default="sa")
    p.add_argument("--budget", default="10000", help="evaluations (e.g. 5000) or seconds (e.g. 30s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="convergence CSV (elapsed, best_H)")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("eval-hop", help="print the average hop count of a deployment")
    p.add_argument("--trace", required=True)
    p.add_argument("--partitioning", required=True)
    p.add_argument("--mapping", required=True)
    p.set_defaults(func=cmd_eval_hop)

    p = sub.add_parser("simulate", help="trace-driven NoC simulation")
    p.add_argument("--trace", required=True)
    p.add_argument("--partitioning", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--mesh", default="5x5")
    p.add_argument("--edge-capacity", type=_capacity, default=256, help="flits per link per cycle, or 'inf'")
    p.add_argument("--injection-capacity", type=_injection, default=None,
                   help="flits per core per cycle; 'edge' (default) follows --edge-capacity, 'inf' unbounded")
    p.add_argument("--e-link", type=float, default=1.0)
    p.add_argument("--e-router", type=float, default=1.0)
    p.add_argument("--hop-latency", type=int, default=1)
    p.add_argument("--cycles-per-timestep", type=int, default=1)
    p.add_argument("--count-once", action="store_true", help="count each waiting flit once per link")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("pipeline", cmd_pipeline, "partition -> map -> simulate in one go"),
        ("baseline", cmd_baseline, "evaluate an internal baseline"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--alg", choices=ALGORITHMS)
        p.add_argument("--budget")
        p.add_argument("--k", type=int)
        p.add_argument("--mesh")
        if name == "baseline":
            p.add_argument("--kind", choices=BASELINES, required=True)
            p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="normalize metrics against the first report")
    p.add_argument("reports", nargs="+")
    p.add_argument("--names", help="comma-separated run names")
    p.add_argument("--out", help="CSV path")
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.__cause__ or exc}", file=sys.stderr)
        return 1
    except (ModelError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
