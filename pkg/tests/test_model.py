import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_events, random_graph_edges, scan_cut, tally_comm
from snnmap.fileio import (
    ParseError,
    load_graph,
    load_mapping,
    load_partitioning,
    load_trace,
    save_graph,
    save_mapping,
    save_partitioning,
    save_trace,
)
from snnmap.model import (
    Mapping,
    MeshTopology,
    ModelError,
    Partitioning,
    SnnGraph,
    SpikeTrace,
    check_consistency,
    comm_matrix,
    cut_weight,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadGraph:
    def test_smallest_graph(self, tmp_path):
        g = load_graph(write(tmp_path, "g.txt", "neurons 2\n0 1 5\n"))
        assert g.num_neurons == 2
        assert list(g.edges()) == [(0, 1, 5)]

    def test_self_loop(self, tmp_path):
        with pytest.raises(ParseError, match="self-loop") as exc:
            load_graph(write(tmp_path, "g.txt", "neurons 4\n0 1 1\n3 3 1\n"))
        assert exc.value.lineno == 3

    def test_out_of_range(self, tmp_path):
        with pytest.raises(ParseError, match="out of range"):
            load_graph(write(tmp_path, "g.txt", "neurons 2\n0 2 1\n"))

    def test_duplicate_rejected_either_orientation(self, tmp_path):
        with pytest.raises(ParseError, match="duplicate") as exc:
            load_graph(write(tmp_path, "g.txt", "neurons 3\n0 1 1\n1 2 1\n1 0 4\n"))
        assert exc.value.lineno == 4

    @pytest.mark.parametrize("text,msg", [
        ("", "header"),
        ("nodes 3\n", "first line"),
        ("neurons 3\n0 1\n", "expected 3"),
        ("neurons 3\n0 x 1\n", "non-integer"),
        ("neurons 3\n0 1 0\n", "weight"),
    ])
    def test_parse_errors(self, tmp_path, text, msg):
        with pytest.raises(ParseError, match=msg):
            load_graph(write(tmp_path, "g.txt", text))

    def test_smooth_320_spike_total(self, tmp_path):
        # 160 -> 160 fully connected, weights spread to total the Smooth_320 spike count
        total = 175124
        pairs = [(i, 160 + j) for i in range(160) for j in range(160)]
        base, extra = divmod(total, len(pairs))
        lines = ["neurons 320"] + [f"{i} {j} {base + (n < extra)}" for n, (i, j) in enumerate(pairs)]
        g = load_graph(write(tmp_path, "smooth320.txt", "\n".join(lines) + "\n"))
        assert g.total_edge_weight == 175124
        assert g.num_neurons == 320

    def test_comments_and_blank_lines(self, tmp_path):
        g = load_graph(write(tmp_path, "g.txt", "# header\nneurons 3\n\n0 1 2  # syn\n"))
        assert g.num_edges == 1


class TestLoadTrace:
    def test_empty(self, tmp_path):
        assert load_trace(write(tmp_path, "t.txt", "")).length == 0

    def test_three_events(self, tmp_path):
        tr = load_trace(write(tmp_path, "t.txt", "0 0 1\n0 0 1\n1 1 0\n"))
        assert tr.length == 3
        assert int((tr.timestep == 0).sum()) == 2

    def test_decreasing_timestep(self, tmp_path):
        with pytest.raises(ParseError, match="decreases") as exc:
            load_trace(write(tmp_path, "t.txt", "0 0 1\n2 0 1\n1 1 0\n"))
        assert exc.value.lineno == 3

    def test_out_of_range_neuron(self, tmp_path):
        g = SnnGraph.from_edges(2, [(0, 1, 1)])
        with pytest.raises(ParseError, match="out of range"):
            load_trace(write(tmp_path, "t.txt", "0 0 5\n"), g)

    def test_consistency_with_graph(self, rng):
        events = random_events(rng, 12, 300)
        tr = SpikeTrace.from_events(events)
        counts = {}
        for _, s, d in events:
            key = (min(s, d), max(s, d))
            counts[key] = counts.get(key, 0) + 1
        g = SnnGraph.from_edges(12, [(a, b, w) for (a, b), w in counts.items()])
        assert check_consistency(g, tr)
        bumped = SnnGraph.from_edges(12, [(a, b, w + (i == 0)) for i, ((a, b), w) in enumerate(counts.items())])
        assert not check_consistency(bumped, tr)


class TestInvariants:
    def test_graph_rejects_bad_input(self):
        with pytest.raises(ModelError):
            SnnGraph.from_edges(2, [(0, 0, 1)])
        with pytest.raises(ModelError):
            SnnGraph.from_edges(2, [(0, 1, 1), (1, 0, 2)])
        with pytest.raises(ModelError):
            SnnGraph.from_edges(2, [(0, 1, 0)])

    def test_graph_is_read_only(self):
        g = SnnGraph.from_edges(2, [(0, 1, 1)])
        with pytest.raises(ValueError):
            g.weight[0] = 5

    def test_partitioning_capacity(self):
        with pytest.raises(ModelError, match="capacity"):
            Partitioning.build([0, 0, 0], 2, 2)
        p = Partitioning.build([0, 0, 2], 3, 2)
        assert p.empty == (False, True, False)

    def test_mapping_injective(self):
        with pytest.raises(ModelError, match="injective"):
            Mapping(((0, 0), (0, 0)))

    def test_mapping_bounds_and_matrix(self):
        mesh = MeshTopology(2, 2)
        m = Mapping(((1, 0), (0, 1)))
        m.validate(mesh)
        mat = m.matrix(mesh)
        assert mat.sum(axis=0).tolist() == [1, 1]
        assert mat[1, 0] == 1 and mat[2, 1] == 1
        with pytest.raises(ModelError):
            Mapping(((2, 0),)).validate(mesh)

    def test_mesh_parse(self):
        m = MeshTopology.parse("5x5")
        assert (m.width, m.height, m.core_capacity, m.edge_capacity) == (5, 5, 256, 256)
        with pytest.raises(ModelError):
            MeshTopology.parse("5-5")
        with pytest.raises(ModelError):
            MeshTopology(0, 3)


class TestCommMatrix:
    def test_empty_trace(self):
        C = comm_matrix(SpikeTrace.from_events([]), Partitioning.build([0, 1], 2, 4))
        assert C.counts.tolist() == [[0, 0], [0, 0]]

    def test_single_partition(self):
        tr = SpikeTrace.from_events([(0, 0, 1), (0, 1, 0), (2, 0, 1), (3, 1, 0)])
        C = comm_matrix(tr, Partitioning.build([0, 0], 1, 4))
        assert C.counts.tolist() == [[4]]

    def test_matches_brute_tally(self, rng):
        events = random_events(rng, 20, 500)
        assign = rng.integers(0, 4, size=20)
        part = Partitioning.build(assign, 4, 20)
        C = comm_matrix(SpikeTrace.from_events(events), part)
        assert C.counts.tolist() == tally_comm(events, assign.tolist(), 4)

    def test_unassigned_neuron(self):
        tr = SpikeTrace.from_events([(0, 0, 3)])
        with pytest.raises(ModelError, match="no partition"):
            comm_matrix(tr, Partitioning.build([0, 0], 1, 4))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 15), st.integers(1, 5), st.integers(0, 200), st.integers(0, 2**32 - 1))
    def test_conserves_trace_length(self, n, k, length, seed):
        rng = np.random.default_rng(seed)
        tr = SpikeTrace.from_events(random_events(rng, n, length))
        part = Partitioning.build(rng.integers(0, k, size=n), k, n)
        C = comm_matrix(tr, part)
        assert int(C.counts.sum()) == tr.length == C.trace_length


class TestCutWeight:
    def test_one_partition(self):
        g = SnnGraph.from_edges(3, [(0, 1, 4), (1, 2, 2)])
        assert cut_weight(g, Partitioning.build([0, 0, 0], 1, 3)) == 0

    def test_k2_split(self):
        g = SnnGraph.from_edges(2, [(0, 1, 5)])
        assert cut_weight(g, Partitioning.build([0, 1], 2, 1)) == 5

    def test_matches_edge_scan(self, rng):
        edges = random_graph_edges(rng, 12, 0.4)
        g = SnnGraph.from_edges(12, edges)
        assign = rng.integers(0, 3, size=12)
        assert cut_weight(g, Partitioning.build(assign, 3, 12)) == scan_cut(edges, assign)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 300), st.integers(0, 2**32 - 1))
    def test_cut_equals_folded_offdiagonal(self, n, k, length, seed):
        rng = np.random.default_rng(seed)
        tr = SpikeTrace.from_events(random_events(rng, n, length))
        g = tr.to_graph(n)
        part = Partitioning.build(rng.integers(0, k, size=n), k, n)
        C = comm_matrix(tr, part).counts
        assert cut_weight(g, part) == int(C.sum() - np.trace(C))


class TestRoundTrip:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 15), st.floats(0, 1), st.integers(0, 2**32 - 1))
    def test_graph(self, tmp_path_factory, n, p, seed):
        rng = np.random.default_rng(seed)
        g = SnnGraph.from_edges(n, random_graph_edges(rng, n, p))
        path = tmp_path_factory.mktemp("rt") / "g.txt"
        save_graph(g, path)
        assert load_graph(path) == g

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 15), st.integers(0, 100), st.integers(0, 2**32 - 1))
    def test_trace(self, tmp_path_factory, n, length, seed):
        tr = SpikeTrace.from_events(random_events(np.random.default_rng(seed), n, length))
        path = tmp_path_factory.mktemp("rt") / "t.txt"
        save_trace(tr, path)
        assert load_trace(path) == tr

    def test_partitioning_and_mapping(self, tmp_path):
        part = Partitioning.build([0, 2, 2, 1], 4, 3)
        save_partitioning(part, tmp_path / "p.json", {"seed": 1})
        assert load_partitioning(tmp_path / "p.json") == part
        m = Mapping(((0, 0), (4, 4), (2, 3), (1, 0)))
        save_mapping(m, tmp_path / "m.json", MeshTopology(5, 5))
        assert load_mapping(tmp_path / "m.json") == m
