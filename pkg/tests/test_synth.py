import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgnn import graph as gc
from subgnn.errors import InputError
from subgnn.graph import Graph
from subgnn.synth import (
    SynthConfig,
    assign_splits,
    bfs_extract,
    complete_graph,
    gen_barabasi_albert,
    gen_duplication_divergence,
    load_dataset,
    make_dataset,
    plant,
    quantile_labels,
    save_dataset,
    staple,
)

from . import oracles


def rng(seed=0):
    return np.random.default_rng(seed)


class TestBarabasiAlbert:
    def test_tiny_tree(self):
        g = gen_barabasi_albert(3, 1, rng())
        assert g.num_nodes == 3 and g.num_edges == 2

    @pytest.mark.parametrize("n,m", [(1, 1), (3, 3)])
    def test_rejects_small_n(self, n, m):
        with pytest.raises(InputError):
            gen_barabasi_albert(n, m, rng())

    @pytest.mark.parametrize("triad_p", [0.0, 0.9])
    def test_edge_count(self, triad_p):
        g = gen_barabasi_albert(5000, 5, rng(), triad_p=triad_p)
        assert g.num_edges == 5 * (5000 - 6) + 15
        assert abs(g.num_edges - 29521) <= 0.2 * 29521

    @given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**16))
    @settings(max_examples=30)
    def test_handshake(self, n, m, seed):
        if n <= m:
            return
        g = gen_barabasi_albert(n, m, rng(seed))
        assert int(g.degrees().sum()) == 2 * g.num_edges
        assert g.num_edges == m * (n - m - 1) + m * (m + 1) // 2


class TestDuplicationDivergence:
    def test_no_isolated(self):
        g = gen_duplication_divergence(5000, 0.7, rng())
        assert g.num_nodes == 5000
        assert g.degrees().min() >= 1
        assert g.edges.max() < 5000

    def test_mean_degree_grows_with_retention(self):
        def mean_deg(p):
            return np.mean([gen_duplication_divergence(300, p, rng(s)).degrees().mean() for s in range(20)])

        lo, hi = mean_deg(0.3), mean_deg(0.7)
        # superlinear: the ratio of means beats the ratio of retention rates
        assert hi / lo > 0.7 / 0.3


class TestAttachment:
    def test_plant_identical_edge(self):
        edge = Graph(2, [(0, 1)])
        g, nodes = plant(edge, edge, 2, rng())
        assert g == edge and nodes == [0, 1]

    def test_plant_k20_on_k3(self):
        g, nodes = plant(complete_graph(3), complete_graph(20), 2, rng())
        assert g.num_nodes == 21
        assert len(nodes) == 20

    def test_plant_rejects_big_overlap(self):
        with pytest.raises(InputError):
            plant(complete_graph(30), complete_graph(3), 4, rng())

    @pytest.mark.parametrize("mode", ["local", "scatter"])
    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25)
    def test_planted_set_holds_patch(self, mode, seed):
        r = rng(seed)
        base = gen_barabasi_albert(30, 2, r)
        patch = gen_duplication_divergence(8, 0.7, r)
        g, nodes = plant(base, patch, 3, r, mode=mode)
        assert len(nodes) == patch.num_nodes
        induced = gc.induced_edge_count(g, nodes)
        assert induced >= patch.num_edges
        # base edges are never dropped
        for u, v in base.edges.tolist():
            assert g.has_edge(u, v)

    def test_staple_single_nodes(self):
        g, nodes = staple(Graph(1), Graph(1), rng())
        assert g.num_nodes == 2 and g.num_edges == 1 and nodes == [1]

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=25)
    def test_staple_single_border_edge(self, seed):
        r = rng(seed)
        base = gen_barabasi_albert(20, 2, r)
        patch = gen_barabasi_albert(6, 1, r)
        g, nodes = staple(base, patch, r)
        assert g.num_edges == base.num_edges + patch.num_edges + 1
        edges = [tuple(e) for e in g.edges.tolist()]
        assert oracles.cut_ratio_pairs(g.num_nodes, edges, nodes) * len(nodes) * (g.num_nodes - len(nodes)) == 1

    def test_bfs_star(self):
        star = Graph(6, [(0, i) for i in range(1, 6)])
        got = bfs_extract(star, 0, 1, 3, rng())
        assert len(got) == 3 and 0 in got

    def test_bfs_whole_component(self):
        g = Graph(6, [(0, 1), (1, 2), (2, 3), (4, 5)])
        assert bfs_extract(g, 1, 5, 10, rng()) == [0, 1, 2, 3]

    @given(seed=st.integers(0, 2**16), depth=st.integers(1, 3), cap=st.integers(1, 15))
    @settings(max_examples=40)
    def test_bfs_within_depth(self, seed, depth, cap):
        r = rng(seed)
        g = gen_barabasi_albert(25, 1, r)
        edges = [tuple(e) for e in g.edges.tolist()]
        dist = oracles.bfs(g.num_nodes, edges, 0)
        got = bfs_extract(g, 0, depth, cap, r)
        assert len(got) <= cap
        assert all(dist[u] <= depth for u in got)


class TestLabels:
    def test_balanced_terciles(self):
        labels, edges = quantile_labels(np.arange(9.0), 3, rng())
        assert labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]
        assert edges == [3.0, 6.0]

    def test_ties_still_balanced(self):
        labels, _ = quantile_labels(np.zeros(10), 3, rng())
        assert sorted(np.bincount(labels).tolist()) == [3, 3, 4]

    def test_split_fractions(self):
        tags = assign_splits(250, rng())
        assert tags.count("train") == 125
        assert tags.count("val") == 62
        assert tags.count("test") == 63


class TestDatasets:
    def test_density(self):
        ds = make_dataset(SynthConfig("density", seed=0))
        assert len(ds.subgraphs) == 250
        assert all(len(s.nodes) == 20 for s in ds.subgraphs)
        assert sorted(np.bincount([s.labels[0] for s in ds.subgraphs]).tolist()) == [83, 83, 84]

    def test_component(self):
        ds = make_dataset(SynthConfig("component", seed=0))
        counts = [len(gc.connected_components(ds.graph, s.nodes)) for s in ds.subgraphs]
        assert 3 <= np.mean(counts) <= 7
        assert all((s.labels[0] == 1) == (c > 1) for s, c in zip(ds.subgraphs, counts))

    def test_cut_ratio_dense(self):
        ds = make_dataset(SynthConfig("cut_ratio", seed=0))
        assert np.mean([gc.density(ds.graph, s.nodes) for s in ds.subgraphs]) >= 0.9

    def test_deterministic(self):
        a = make_dataset(SynthConfig("density", seed=3, base_nodes=300, num_subgraphs=20))
        b = make_dataset(SynthConfig("density", seed=3, base_nodes=300, num_subgraphs=20))
        assert a.graph == b.graph
        assert a.subgraphs == b.subgraphs

    def test_inconsistent_config(self):
        with pytest.raises(InputError):
            SynthConfig("component", bin_count=3)
        with pytest.raises(InputError):
            SynthConfig("nope")

    def test_roundtrip(self, tmp_path):
        ds = make_dataset(SynthConfig("component", seed=1, base_nodes=100, num_subgraphs=12))
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.graph == ds.graph
        assert back.subgraphs == ds.subgraphs
        assert back.label_names == ds.label_names

    def test_external_multilabel(self, tmp_path):
        (tmp_path / "edge_list.txt").write_text("0 1\n1 2\n2 3\n")
        (tmp_path / "subgraphs.tsv").write_text("0-1\ta-b\ttrain\n2-3\tb\ttest\n")
        ds = load_dataset(tmp_path)
        assert ds.multilabel
        assert ds.label_names == ["a", "b"]
        assert ds.subgraphs[0].labels == [0, 1]
