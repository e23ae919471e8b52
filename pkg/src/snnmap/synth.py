"""Synthetic SNN workloads with Bernoulli firing.

Every generator returns a ``(graph, trace)`` pair where the graph's edge
weights are the trace's spike counts folded onto undirected neuron pairs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import ModelError, SnnGraph, SpikeTrace


def parse_connectivity(spec: str | float) -> float:
    """``"full"`` -> 1.0, ``"random:0.1"`` or ``0.1`` -> 0.1."""
    if isinstance(spec, (int, float)):
        p = float(spec)
    elif spec == "full":
        p = 1.0
    elif spec.startswith("random:"):
        try:
            p = float(spec.split(":", 1)[1])
        except ValueError:
            raise ModelError(f"bad connectivity {spec!r}") from None
    else:
        raise ModelError(f"connectivity must be 'full' or 'random:<p>', got {spec!r}")
    if not 0.0 < p <= 1.0:
        raise ModelError(f"connection probability must lie in (0, 1], got {p}")
    return p


def _check_rate(rate: float, timesteps: int) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ModelError(f"firing rate must lie in [0, 1], got {rate}")
    if timesteps < 0:
        raise ModelError("timesteps must be >= 0")


def _fire(indptr: np.ndarray, targets: np.ndarray, n_src: int, rate: float, timesteps: int, rng) -> SpikeTrace:
    """Emit one event per outgoing synapse each time a neuron fires."""
    fired = rng.random((timesteps, n_src)) < rate
    t_idx, s_idx = np.nonzero(fired)
    counts = indptr[s_idx + 1] - indptr[s_idx]
    total = int(counts.sum())
    if total == 0:
        return SpikeTrace.from_arrays([], [], [])
    starts = np.repeat(indptr[s_idx], counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    dst = targets[starts + within]
    t = np.repeat(t_idx, counts)
    src = np.repeat(s_idx, counts)
    order = np.lexsort((dst, src, t))
    return SpikeTrace.from_arrays(t[order], src[order], dst[order])


def _csr(src: np.ndarray, dst: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order]


def gen_feedforward(
    layers: Sequence[int],
    connectivity: str | float = "full",
    rate: float = 0.05,
    timesteps: int = 1000,
    seed: int = 0,
) -> tuple[SnnGraph, SpikeTrace]:
    """Layered network; spikes flow from layer ``i`` to ``i + 1`` only.

    Neurons are numbered layer-major. Each non-output neuron fires
    independently with probability ``rate`` per timestep.
    """
    if len(layers) < 2 or any(n < 1 for n in layers):
        raise ModelError("need at least two layers of size >= 1")
    p = parse_connectivity(connectivity)
    _check_rate(rate, timesteps)
    rng = np.random.default_rng(seed)
    offsets = np.concatenate([[0], np.cumsum(layers)]).astype(np.int64)
    n = int(offsets[-1])

    srcs, dsts = [], []
    for i in range(len(layers) - 1):
        mask = np.ones((layers[i], layers[i + 1]), dtype=bool) if p >= 1.0 else rng.random((layers[i], layers[i + 1])) < p
        a, b = np.nonzero(mask)
        srcs.append(a + offsets[i])
        dsts.append(b + offsets[i + 1])
    syn_src = np.concatenate(srcs)
    syn_dst = np.concatenate(dsts)
    n_src = int(offsets[-2])
    indptr, targets = _csr(syn_src, syn_dst, n_src)

    trace = _fire(indptr, targets, n_src, rate, timesteps, rng)
    return trace.to_graph(n), trace


def gen_random(n: int, p: float, rate: float = 0.05, timesteps: int = 1000, seed: int = 0) -> tuple[SnnGraph, SpikeTrace]:
    """Erdos-Renyi network with symmetric synapses.

    Each undirected pair is connected with probability ``p``; a firing neuron
    sends one spike to every neighbour.
    """
    if n < 1:
        raise ModelError("need at least one neuron")
    if not 0.0 <= p <= 1.0:
        raise ModelError(f"connection probability must lie in [0, 1], got {p}")
    _check_rate(rate, timesteps)
    rng = np.random.default_rng(seed)
    lo_parts, hi_parts = [], []
    for i in range(n - 1):
        js = np.flatnonzero(rng.random(n - 1 - i) < p) + i + 1
        lo_parts.append(np.full(len(js), i, dtype=np.int64))
        hi_parts.append(js)
    lo = np.concatenate(lo_parts) if lo_parts else np.empty(0, dtype=np.int64)
    hi = np.concatenate(hi_parts) if hi_parts else np.empty(0, dtype=np.int64)
    indptr, targets = _csr(np.concatenate([lo, hi]), np.concatenate([hi, lo]), n)
    trace = _fire(indptr, targets, n, rate, timesteps, rng)
    return trace.to_graph(n), trace


def rate_for_spikes(layers: Sequence[int], connectivity: str | float, timesteps: int, target_spikes: float) -> float:
    """Firing rate whose expected feedforward spike count equals ``target_spikes``."""
    p = parse_connectivity(connectivity)
    synapses = p * sum(a * b for a, b in zip(layers[:-1], layers[1:]))
    return target_spikes / (synapses * timesteps)
