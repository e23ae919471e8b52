import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import degrees, exhaustive_min_cut, random_graph_edges, reaggregate, scan_cut, two_cliques
from snnmap.model import Partitioning, SnnGraph, cut_weight
from snnmap.partition import (
    InfeasibleError,
    RefinementState,
    coarsen,
    contract,
    heavy_edge_matching,
    initial_partition,
    partition,
    project,
    random_partition,
    refine_level,
    uncoarsen_refine,
)
from snnmap.synth import gen_feedforward


def graph_of(n, edges):
    return SnnGraph.from_edges(n, edges)


class TestCoarsen:
    def test_path_folds_heaviest(self):
        g = graph_of(3, [(0, 1, 5), (1, 2, 1)])
        match = heavy_edge_matching(g, [0, 1, 2])
        assert match.tolist() == [1, 0, 2]

    def test_tie_goes_to_lowest_id(self):
        g = graph_of(4, [(0, 3, 2), (0, 2, 2), (0, 1, 1)])
        assert heavy_edge_matching(g, [0, 1, 2, 3])[0] == 2

    def test_edgeless_terminates(self):
        g = graph_of(6, [])
        levels = coarsen(g, stop_size=1)
        assert len(levels) == 1
        assert levels[0].graph == g

    def test_levels_conserve_weight_and_reaggregate(self, rng):
        for _ in range(10):
            edges = random_graph_edges(rng, 64, 0.1)
            g = graph_of(64, edges)
            levels = coarsen(g, stop_size=4, seed=int(rng.integers(1 << 30)))
            for prev, level in zip(levels, levels[1:]):
                fine = prev.graph
                assert level.graph.total_vertex_weight == 64
                assert level.graph.num_neurons >= fine.num_neurons / 2
                covered = sorted(v for grp in level.fold_map for v in grp)
                assert covered == list(range(fine.num_neurons))
                coarse_edges = {(i, j): w for i, j, w in level.graph.edges()}
                assert coarse_edges == reaggregate(list(fine.edges()), level.coarse_of.tolist())

    def test_weight_cap(self):
        g = graph_of(4, [(0, 1, 9), (1, 2, 9), (2, 3, 9)])
        lvl = contract(g, heavy_edge_matching(g, [0, 1, 2, 3]))
        again = heavy_edge_matching(lvl.graph, [0, 1], max_vertex_weight=2)
        assert again.tolist() == [0, 1]

    def test_projection_preserves_cut(self, rng):
        edges = random_graph_edges(rng, 40, 0.2)
        g = graph_of(40, edges)
        levels = coarsen(g, stop_size=5, seed=3)
        assert len(levels) > 1
        coarse = levels[-1].graph
        ca = rng.integers(0, 3, size=coarse.num_neurons)
        fine = ca
        for lvl in reversed(levels[1:]):
            fine = project(lvl, fine)
        cap = coarse.total_vertex_weight
        assert cut_weight(coarse, Partitioning.build(ca, 3, cap, coarse.vertex_weight)) == scan_cut(edges, fine)


class TestInitialPartition:
    def test_k1(self):
        g = graph_of(5, [(0, 1, 1), (3, 4, 2)])
        assert initial_partition(g, 1, 5).assignment.tolist() == [0] * 5

    def test_forced_bounds(self):
        g = graph_of(4, [(0, 1, 1), (2, 3, 1)])
        assert sorted(initial_partition(g, 2, 2, seed=1).loads().tolist()) == [2, 2]

    def test_random_graphs_valid(self, rng):
        for s in range(20):
            g = graph_of(10, random_graph_edges(rng, 10, 0.3))
            p = initial_partition(g, 3, 4, seed=s)
            assert (p.assignment >= 0).all() and p.loads().max() <= 4

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            initial_partition(graph_of(5, []), 2, 2)
        with pytest.raises(InfeasibleError):
            partition(graph_of(5, []), 2, 2)


class TestRefinement:
    def test_gain_definition(self):
        # v=0 sits with 1 (weight 2); partition 1 holds 2 and 3 (weights 3 + 4)
        g = graph_of(4, [(0, 1, 2), (0, 2, 3), (0, 3, 4)])
        st_ = RefinementState(g, [0, 0, 1, 1], 2, 4)
        assert st_.ID[0] == 2 and st_.ED[0] == {1: 7}
        assert st_.gain(0) == 5
        before = st_.cut
        assert st_.move(0, 1) == 5
        assert st_.cut == before - 5 == scan_cut(list(g.edges()), st_.D)

    def test_optimal_makes_no_net_moves(self):
        n, edges = two_cliques()
        g = graph_of(n, edges)
        init = Partitioning.build([0] * 4 + [1] * 4, 2, 4)
        out = uncoarsen_refine(coarsen(g, 100), init, 4)
        assert out.assignment.tolist() == init.assignment.tolist()
        assert cut_weight(g, out) == 1

    def test_eligibility(self):
        g = graph_of(3, [(0, 1, 5), (1, 2, 1)])
        st_ = RefinementState(g, [0, 0, 1], 2, 3)
        assert not st_.eligible(0)
        assert not st_.eligible(1)
        assert st_.eligible(2)

    def test_capacity_blocks_move(self):
        g = graph_of(4, [(0, 2, 9), (0, 3, 9)])
        st_ = RefinementState(g, [0, 0, 1, 1], 2, 2)
        assert st_.feasible_target(0) is None
        refine_level(st_)
        assert st_.D == [0, 0, 1, 1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 16), st.floats(0.1, 0.9), st.integers(0, 2**32 - 1))
    def test_incremental_degrees_match_recompute(self, n, p, seed):
        rng = np.random.default_rng(seed)
        edges = random_graph_edges(rng, n, p)
        g = graph_of(n, edges)
        cap = (n + 1) // 2 + 1
        init = random_partition(g, 2, cap, seed=seed % 1000)
        bad = []

        def check(state):
            ID, ED = degrees(edges, n, state.D)
            if ID != state.ID or ED != state.ED or state.cut != scan_cut(edges, state.D):
                bad.append(list(state.D))

        state = RefinementState(g, init.assignment, 2, cap)
        start = state.cut
        refine_level(state, x=5, on_move=check)
        assert not bad
        assert state.cut <= start
        assert max(state.loads) <= cap


class TestPartition:
    def test_two_cliques(self):
        n, edges = two_cliques()
        g = graph_of(n, edges)
        for seed in range(5):
            assert cut_weight(g, partition(g, 2, 4, seed=seed)) == 1

    def test_k1_cut_zero(self):
        g = graph_of(4, [(0, 1, 3), (2, 3, 1)])
        assert cut_weight(g, partition(g, 1, 4)) == 0

    def test_deterministic(self, rng):
        g = graph_of(50, random_graph_edges(rng, 50, 0.2))
        a = partition(g, 3, 20, seed=7)
        b = partition(g, 3, 20, seed=7)
        assert a == b

    def test_small_instances_vs_exhaustive(self, rng):
        hits = 0
        for _ in range(10):
            edges = random_graph_edges(rng, 9, 0.4)
            g = graph_of(9, edges)
            best = exhaustive_min_cut(9, edges, 2, 5)
            hits += cut_weight(g, partition(g, 2, 5, seed=0)) == best
        assert hits >= 8

    def test_beats_random_on_feedforward(self):
        g, _ = gen_feedforward([160, 160], "random:0.1", rate=0.05, timesteps=200, seed=4)
        part = partition(g, 2, 256, seed=0)
        baseline = min(cut_weight(g, random_partition(g, 2, 256, seed=s)) for s in range(20))
        assert cut_weight(g, part) <= baseline

    def test_random_partition_respects_capacity(self, rng):
        g = graph_of(37, random_graph_edges(rng, 37, 0.1))
        for s in range(10):
            p = random_partition(g, 4, 10, seed=s)
            assert p.loads().max() <= 10
