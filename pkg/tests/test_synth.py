import numpy as np
import pytest

from snnmap.model import ModelError, check_consistency
from snnmap.synth import gen_feedforward, gen_random, parse_connectivity, rate_for_spikes


def test_single_synapse_every_step():
    g, tr = gen_feedforward([1, 1], "full", rate=1.0, timesteps=5)
    assert tr.length == 5
    assert list(g.edges()) == [(0, 1, 5)]


def test_rate_zero_prunes_edges():
    g, tr = gen_feedforward([3, 4], "full", rate=0.0, timesteps=10)
    assert tr.length == 0 and g.num_edges == 0 and g.num_neurons == 7


def test_smooth_320_spike_count():
    layers, conn, steps = [320, 320], "random:0.1", 1000
    rate = rate_for_spikes(layers, conn, steps, 175124)
    _, tr = gen_feedforward(layers, conn, rate, steps, seed=1)
    assert abs(tr.length - 175124) <= 0.05 * 175124


def test_layer_major_direction():
    _, tr = gen_feedforward([2, 3, 2], "full", rate=0.5, timesteps=20, seed=3)
    layer = np.searchsorted([2, 5], np.arange(7), side="right")
    assert tr.length > 0
    assert np.all(layer[tr.dst] == layer[tr.src] + 1)


def test_random_two_neurons_full():
    g, _ = gen_random(2, 1.0, rate=0.5, timesteps=50, seed=0)
    assert [(i, j) for i, j, _ in g.edges()] == [(0, 1)]


def test_random_p_zero():
    g, tr = gen_random(10, 0.0)
    assert g.num_edges == 0 and tr.length == 0


def test_random_edge_count_binomial():
    n, p = 100, 0.1
    g, _ = gen_random(n, p, rate=0.05, timesteps=1000, seed=2)
    pairs = n * (n - 1) // 2
    mean, sd = pairs * p, (pairs * p * (1 - p)) ** 0.5
    assert abs(g.num_edges - mean) <= 4 * sd


@pytest.mark.parametrize("seed", range(5))
def test_consistency_and_determinism(seed):
    g, tr = gen_feedforward([20, 30, 10], "random:0.3", rate=0.1, timesteps=100, seed=seed)
    assert check_consistency(g, tr)
    g2, tr2 = gen_feedforward([20, 30, 10], "random:0.3", rate=0.1, timesteps=100, seed=seed)
    assert g == g2 and tr == tr2
    g, tr = gen_random(40, 0.2, rate=0.1, timesteps=50, seed=seed)
    assert check_consistency(g, tr)
    assert np.all(np.diff(tr.timestep) >= 0)


def test_bad_parameters():
    for bad in ("half", "random:0", "random:x", 1.5):
        with pytest.raises(ModelError):
            parse_connectivity(bad)
    with pytest.raises(ModelError):
        gen_feedforward([3, 3], rate=-0.1)
    with pytest.raises(ModelError):
        gen_random(5, 1.2)
    with pytest.raises(ModelError):
        gen_feedforward([3])
