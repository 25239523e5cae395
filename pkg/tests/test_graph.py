import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgnn.errors import DomainError, InputError
from subgnn.graph import (
    Graph,
    avg_shortest_path,
    border_edge_count,
    connected_components,
    core_numbers,
    cut_ratio,
    density,
    khop_neighborhood,
    multi_source_bfs,
    read_edge_list,
    write_edge_list,
)

from . import oracles


def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return Graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


@st.composite
def small_graphs(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return n, [p for p, keep in zip(pairs, mask) if keep]


class TestConstruction:
    def test_canonicalizes(self):
        g = Graph(4, [(0, 1), (1, 0), (2, 2), (1, 3), (1, 3)])
        assert g.num_edges == 2
        assert g.neighbors(1).tolist() == [0, 3]
        assert g.neighbors(2).tolist() == []

    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            Graph(2, [(0, 2)])

    @given(small_graphs())
    def test_invariants(self, ng):
        n, edges = ng
        g = Graph(n, edges)
        adj = g.adjacency
        for u in range(n):
            assert u not in adj[u]
            assert adj[u] == sorted(set(adj[u]))
            for v in adj[u]:
                assert u in adj[v]
        assert g.num_edges * 2 == sum(len(a) for a in adj)

    def test_edge_list_roundtrip(self, tmp_path):
        g = Graph(6, [(0, 1), (3, 4)])
        p = tmp_path / "e.txt"
        write_edge_list(g, p)
        assert read_edge_list(p) == g

    def test_edge_list_comments_and_symmetrize(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("# a comment\n0 1\n1 0\n2 1\n")
        g = read_edge_list(p)
        assert g.num_nodes == 3 and g.num_edges == 2

    def test_edge_list_bad_line(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 x\n")
        with pytest.raises(InputError, match=":1:"):
            read_edge_list(p)


class TestComponents:
    def test_triangle(self):
        assert connected_components(triangle(), {0, 1, 2}) == [[0, 1, 2]]

    def test_no_induced_edge(self):
        assert connected_components(path(3), {0, 2}) == [[0], [2]]

    def test_unknown_id(self):
        with pytest.raises(InputError):
            connected_components(path(3), {5})

    @given(small_graphs(), st.randoms(use_true_random=False))
    def test_matches_union_find(self, ng, rnd):
        n, edges = ng
        nodes = [u for u in range(n) if rnd.random() < 0.6]
        g = Graph(n, edges)
        assert connected_components(g, nodes) == oracles.union_find_components(n, edges, nodes)
        shuffled = list(nodes)
        rnd.shuffle(shuffled)
        assert connected_components(g, shuffled) == connected_components(g, nodes)


class TestDensityCutRatio:
    def test_k4(self):
        assert density(complete(4), range(4)) == 1.0

    def test_path(self):
        assert density(path(3), {0, 1, 2}) == pytest.approx(2 * 2 / 6)

    @pytest.mark.parametrize("nodes", [[], [1]])
    def test_degenerate(self, nodes):
        assert density(path(3), nodes) == 0.0

    def test_cut_k4(self):
        assert cut_ratio(complete(4), {0, 1}) == 1.0

    def test_cut_star(self):
        star = Graph(5, [(0, i) for i in range(1, 5)])
        assert cut_ratio(star, {1}) == 0.25

    @pytest.mark.parametrize("nodes", [set(), {0, 1, 2}])
    def test_cut_undefined(self, nodes):
        with pytest.raises(DomainError):
            cut_ratio(path(3), nodes)

    @given(small_graphs(), st.randoms(use_true_random=False))
    def test_oracles(self, ng, rnd):
        n, edges = ng
        g = Graph(n, edges)
        nodes = [u for u in range(n) if rnd.random() < 0.5]
        d = density(g, nodes)
        assert d == oracles.induced_density(n, edges, nodes)
        assert 0.0 <= d <= 1.0
        if 0 < len(set(nodes)) < n:
            cr = cut_ratio(g, nodes)
            assert cr == oracles.cut_ratio_pairs(n, edges, nodes)
            comp = [u for u in range(n) if u not in set(nodes)]
            assert border_edge_count(g, nodes) == border_edge_count(g, comp)


class TestCore:
    def test_triangle(self):
        assert core_numbers(triangle()).tolist() == [2, 2, 2]

    def test_path(self):
        assert core_numbers(path(3)).tolist() == [1, 1, 1]

    def test_isolated(self):
        assert core_numbers(Graph(2)).tolist() == [0, 0]

    @given(small_graphs())
    def test_matches_peeling_oracle(self, ng):
        n, edges = ng
        assert core_numbers(Graph(n, edges)).tolist() == oracles.core_numbers_by_k(n, edges)

    @settings(max_examples=40)
    @given(small_graphs(max_n=10), st.data())
    def test_monotone_under_deletion(self, ng, data):
        n, edges = ng
        if not edges:
            return
        u, v = data.draw(st.sampled_from(edges))
        before = core_numbers(Graph(n, edges))[u]
        # delete v by dropping its edges
        after = core_numbers(Graph(n, [e for e in edges if v not in e]))[u]
        assert after <= before


class TestDistances:
    def test_khop_path(self):
        assert khop_neighborhood(path(4), {0}, 2) == {1, 2}

    def test_khop_everything(self):
        assert khop_neighborhood(path(4), range(4), 1) == set()

    def test_khop_bad_k(self):
        with pytest.raises(InputError):
            khop_neighborhood(path(4), {0}, 0)

    def test_asp_trivial(self):
        assert avg_shortest_path(path(3), {1}, {1}) == 0
        assert avg_shortest_path(path(3), {0}, {2}) == 2

    def test_asp_disconnected(self):
        assert avg_shortest_path(Graph(3, [(0, 1)]), {0}, {2}) == math.inf

    def test_asp_empty(self):
        with pytest.raises(InputError):
            avg_shortest_path(path(3), set(), {1})

    @given(small_graphs(), st.randoms(use_true_random=False), st.integers(1, 3))
    def test_oracles(self, ng, rnd, k):
        n, edges = ng
        g = Graph(n, edges)
        nodes = rnd.sample(range(n), rnd.randint(1, min(4, n)))
        other = rnd.sample(range(n), rnd.randint(1, min(4, n)))
        assert khop_neighborhood(g, nodes, k) == oracles.khop(n, edges, nodes, k)
        expect = oracles.avg_sp(n, edges, nodes, other)
        got = avg_shortest_path(g, nodes, other)
        assert got == pytest.approx(expect) if math.isfinite(expect) else got == math.inf
        assert avg_shortest_path(g, other, nodes) == got

    @given(small_graphs())
    def test_distance_index_invariants(self, ng):
        n, edges = ng
        g = Graph(n, edges)
        idx = multi_source_bfs(g, {0})
        assert idx[0] == 0
        assert all(idx[v] > 0 for v in range(1, n))
        for u, v in edges:
            du, dv = idx[u], idx[v]
            if math.isfinite(du) or math.isfinite(dv):
                assert abs(du - dv) <= 1

    def test_purity(self):
        rng = random.Random(3)
        edges = oracles.random_edges(12, 0.3, rng)
        g = Graph(12, edges)
        assert np.array_equal(core_numbers(g), core_numbers(g))
        assert khop_neighborhood(g, {0, 1}, 2) == khop_neighborhood(g, {1, 0}, 2)
