"""Text and JSON (de)serialization for graphs, traces, partitionings and mappings.

Graph files::

    neurons 3
    0 1 5
    1 2 2

Trace files hold one ``t src dst`` triple per line, sorted by ``t``.
Blank lines and ``#`` comments are ignored in both.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from .model import MeshTopology, Mapping, ModelError, Partitioning, SnnGraph, SpikeTrace


class ParseError(ModelError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


def _content_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _ints(path, lineno, line, n):
    parts = line.split()
    if len(parts) != n:
        raise ParseError(path, lineno, f"expected {n} integers, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ParseError(path, lineno, f"non-integer field in {line!r}") from None


def load_graph(path) -> SnnGraph:
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(path, 1, "missing 'neurons <n>' header") from None
    parts = header.split()
    if len(parts) != 2 or parts[0] != "neurons":
        raise ParseError(path, lineno, "first line must be 'neurons <n>'")
    try:
        n = int(parts[1])
    except ValueError:
        raise ParseError(path, lineno, f"bad neuron count {parts[1]!r}") from None
    if n < 0:
        raise ParseError(path, lineno, "negative neuron count")

    seen: dict[tuple[int, int], int] = {}
    edges = []
    for lineno, line in lines:
        i, j, w = _ints(path, lineno, line, 3)
        if i == j:
            raise ParseError(path, lineno, f"self-loop on neuron {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(path, lineno, f"neuron index out of range [0, {n})")
        if w < 1:
            raise ParseError(path, lineno, f"edge weight must be >= 1, got {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ParseError(path, lineno, f"duplicate edge {key} (first on line {seen[key]})")
        seen[key] = lineno
        edges.append((i, j, w))
    return SnnGraph.from_edges(n, edges)


def save_graph(graph: SnnGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"neurons {graph.num_neurons}\n")
        fh.writelines(f"{i} {j} {w}\n" for i, j, w in graph.edges())


def load_trace(path, graph: SnnGraph | None = None) -> SpikeTrace:
    n = None if graph is None else graph.num_neurons
    try:
        fast = _load_trace_fast(path, n)
    except ValueError:
        fast = None
    if fast is not None:
        return fast
    # slow path pinpoints the offending line
    rows = []
    last_t = 0
    for lineno, line in _content_lines(path):
        t, s, d = _ints(path, lineno, line, 3)
        if t < 0:
            raise ParseError(path, lineno, "negative timestep")
        if t < last_t:
            raise ParseError(path, lineno, f"timestep {t} decreases (previous {last_t})")
        if s == d:
            raise ParseError(path, lineno, f"spike from neuron {s} to itself")
        if s < 0 or d < 0 or (n is not None and (s >= n or d >= n)):
            raise ParseError(path, lineno, f"neuron id out of range [0, {n})")
        last_t = t
        rows.append((t, s, d))
    return SpikeTrace.from_events(rows, n)


def _load_trace_fast(path, n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # empty-file warning
        data = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
    if data.size == 0:
        return SpikeTrace.from_events([], n)
    if data.shape[1] != 3:
        return None
    t, s, d = data[:, 0], data[:, 1], data[:, 2]
    if t.min() < 0 or np.any(np.diff(t) < 0) or np.any(s == d):
        return None
    if min(s.min(), d.min()) < 0 or (n is not None and max(s.max(), d.max()) >= n):
        return None
    return SpikeTrace.from_arrays(t, s, d, n)


def save_trace(trace: SpikeTrace, path) -> None:
    data = np.stack([trace.timestep, trace.src, trace.dst], axis=1)
    with open(path, "w", encoding="utf-8") as fh:
        np.savetxt(fh, data, fmt="%d")


def dump_json(doc: dict[str, Any], path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None


def partitioning_to_json(part: Partitioning, meta: dict | None = None) -> dict[str, Any]:
    doc = {
        "k": part.k,
        "capacity": part.capacity,
        "assignment": part.assignment.tolist(),
        "empty": list(part.empty),
    }
    if meta:
        doc["meta"] = meta
    return doc


def partitioning_from_json(doc: dict[str, Any]) -> Partitioning:
    try:
        return Partitioning.build(doc["assignment"], doc["k"], doc["capacity"])
    except KeyError as exc:
        raise ModelError(f"partitioning JSON lacks field {exc}") from None


def mapping_to_json(mapping: Mapping, mesh: MeshTopology | None = None, meta: dict | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {"core_of": [list(c) for c in mapping.core_of]}
    if mesh is not None:
        doc["mesh"] = mesh.label()
    if meta:
        doc["meta"] = meta
    return doc


def mapping_from_json(doc: dict[str, Any]) -> Mapping:
    try:
        return Mapping(tuple(tuple(c) for c in doc["core_of"]))
    except KeyError as exc:
        raise ModelError(f"mapping JSON lacks field {exc}") from None


def save_partitioning(part: Partitioning, path, meta: dict | None = None) -> None:
    dump_json(partitioning_to_json(part, meta), path)


def load_partitioning(path) -> Partitioning:
    return partitioning_from_json(read_json(path))


def save_mapping(mapping: Mapping, path, mesh: MeshTopology | None = None, meta: dict | None = None) -> None:
    dump_json(mapping_to_json(mapping, mesh, meta), path)


def load_mapping(path) -> Mapping:
    return mapping_from_json(read_json(path))
