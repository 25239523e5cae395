from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from subgnn import graph as gc
from subgnn.anchors import (
    AnchorPatch,
    PoolConfig,
    WalkConfig,
    build_pools,
    load_pools,
    sample_neighborhood,
    sample_position_border,
    sample_position_internal,
    sample_structure,
    save_pools,
    structure_walks,
    successor_law,
    triangular_walk,
)
from subgnn.errors import InputError
from subgnn.graph import Graph
from subgnn.synth import gen_barabasi_albert

from . import oracles

K3 = Graph(3, [(0, 1), (1, 2), (0, 2)])
# 0-1-2-3-0 with chord 0-2
CYCLE_CHORD = Graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])


def transition_frequencies(graph, beta, steps, seed):
    walk = triangular_walk(graph, [0], steps, beta, np.random.default_rng(seed))
    counts: dict[tuple[int, int], Counter] = {}
    for x, y, z in zip(walk, walk[1:], walk[2:]):
        counts.setdefault((x, y), Counter())[z] += 1
    return walk, counts


class TestTriangularWalk:
    @pytest.mark.parametrize("beta,expect", [(1.0, "third"), (0.0, "back")])
    def test_k3_extremes(self, beta, expect):
        walk = triangular_walk(K3, [0], 30, beta, np.random.default_rng(0))
        for x, y, z in zip(walk, walk[1:], walk[2:]):
            assert z == ({0, 1, 2} - {x, y}).pop() if expect == "third" else z == x

    def test_halts_without_neighbors(self):
        assert triangular_walk(Graph(2), [0], 5, 0.5, np.random.default_rng(0)) == [0]

    def test_law_renormalizes(self):
        # path 0-1-2: from (0, 1) there is no triangle, so all mass is on {0, 2}
        law = successor_law(Graph(3, [(0, 1), (1, 2)]), 0, 1, 0.9)
        assert law == {0: 0.5, 2: 0.5}

    @pytest.mark.parametrize("graph", [K3, CYCLE_CHORD], ids=["k3", "cycle_chord"])
    @pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
    def test_monte_carlo_law(self, graph, beta):
        _, counts = transition_frequencies(graph, beta, 100_000, seed=1)
        for (x, y), ctr in counts.items():
            total = sum(ctr.values())
            law = successor_law(graph, x, y, beta)
            assert set(ctr) <= set(law)
            for z, p in law.items():
                assert abs(ctr[z] / total - p) <= 0.02

    def test_allowed_restricts(self):
        g = gen_barabasi_albert(40, 3, np.random.default_rng(0))
        allowed = set(range(10))
        walk = triangular_walk(g, [0], 50, 0.5, np.random.default_rng(1), allowed=allowed)
        assert set(walk) <= allowed

    def test_empty_starts(self):
        with pytest.raises(InputError):
            triangular_walk(K3, [], 3, 0.5, np.random.default_rng(0))


class TestSamplers:
    def test_position_internal_singleton(self):
        p = sample_position_internal([7], np.random.default_rng(0))
        assert p.nodes == (7,) and p.subchannel == "P_I"

    def test_position_internal_uniform(self):
        r = np.random.default_rng(0)
        draws = Counter(sample_position_internal([3, 5, 8, 9], r).nodes[0] for _ in range(10_000))
        assert set(draws) == {3, 5, 8, 9}
        assert all(abs(c / 10_000 - 0.25) <= 0.02 for c in draws.values())
        assert chisquare(list(draws.values())).pvalue > 1e-3

    def test_position_border_uniform(self):
        r = np.random.default_rng(0)
        g = Graph(5, [(0, 1)])
        draws = Counter(sample_position_border(g, r).nodes[0] for _ in range(10_000))
        assert set(draws) <= set(range(5))
        assert chisquare([draws[i] for i in range(5)]).pvalue > 1e-3
        assert sample_position_border(Graph(1), r).nodes == (0,)

    def test_neighborhood_internal_singleton(self):
        p = sample_neighborhood(K3, [2], 1, False, np.random.default_rng(0))
        assert p.nodes == (2,)

    def test_neighborhood_sentinel(self):
        p = sample_neighborhood(Graph(3, [(0, 1)]), [2], 1, True, np.random.default_rng(0))
        assert p.is_sentinel and p.subchannel == "N_B"

    @given(seed=st.integers(0, 2**16), k=st.integers(1, 2))
    @settings(max_examples=20, deadline=None)
    def test_border_support_matches_khop(self, seed, k):
        r = np.random.default_rng(seed)
        g = gen_barabasi_albert(12, 1, r)
        comp = [0, 1]
        seen = {sample_neighborhood(g, comp, k, True, r).nodes[0] for _ in range(1000)}
        edges = [tuple(e) for e in g.edges.tolist()]
        assert seen == oracles.khop(g.num_nodes, edges, comp, k)
        assert not seen & set(comp)

    def test_structure_length_one(self):
        r = np.random.default_rng(0)
        for _ in range(20):
            p = sample_structure(K3, WalkConfig(walk_length=1, num_walks=1), r)
            assert len(p.nodes) == 2

    @given(seed=st.integers(0, 2**16), length=st.integers(1, 12))
    @settings(max_examples=40)
    def test_structure_connected_and_bounded(self, seed, length):
        r = np.random.default_rng(seed)
        g = gen_barabasi_albert(30, 2, r)
        p = sample_structure(g, WalkConfig(walk_length=length, num_walks=1), r)
        assert len(p.nodes) <= length + 1
        assert len(gc.connected_components(g, p.nodes)) == 1


class TestStructureWalks:
    def setup_method(self):
        self.g = gen_barabasi_albert(40, 2, np.random.default_rng(5))
        self.patch = sorted(gc.connected_components(self.g, range(8))[0])

    def test_internal_stays_inside(self):
        walks = structure_walks(self.g, self.patch, WalkConfig(), "internal", 1, np.random.default_rng(0))
        assert len(walks) == 5
        assert all(set(w) <= set(self.patch) for w in walks)

    @pytest.mark.parametrize("k", [1, 2])
    def test_border_walk_support(self, k):
        inside = set(self.patch)
        ext = gc.khop_neighborhood(self.g, inside, k)
        walks = structure_walks(self.g, self.patch, WalkConfig(walk_length=8), "border", k,
                                np.random.default_rng(0))
        for w in walks:
            assert w[0] in inside and self.g.neighbor_set(w[0]) & ext
            if len(w) > 1:
                assert w[1] in ext
            for u in w:
                assert u in ext or (u in inside and self.g.neighbor_set(u) & ext)

    def test_border_without_exterior(self):
        assert structure_walks(K3, [0, 1, 2], WalkConfig(), "border", 1, np.random.default_rng(0)) == []


class TestPools:
    def setup_method(self):
        self.g = gen_barabasi_albert(60, 2, np.random.default_rng(2))
        self.comps = [[[0, 1], [30]], [[5, 6, 7]]]
        self.cfg = PoolConfig(pool_size=6, encode_walk=WalkConfig(walk_length=4, num_walks=2))

    def test_shapes(self):
        pools = build_pools(self.g, self.comps, self.cfg, seed=0)
        assert len(pools.position_border) == 6
        assert len(pools.structure) == 6
        assert len(pools.position_internal) == 2
        assert len(pools.neighborhood_internal) == 3
        assert pools.node_matrix("N_B").shape == (3, 6)
        assert [p.pool_index for p in pools.structure] == list(range(6))
        # internal position patches come from the whole subgraph
        assert {p.nodes[0] for p in pools.position_internal[0]} <= {0, 1, 30}

    def test_deterministic_and_roundtrip(self, tmp_path):
        a = build_pools(self.g, self.comps, self.cfg, seed=4)
        b = build_pools(self.g, self.comps, self.cfg, seed=4)
        assert a == b
        save_pools(a, tmp_path / "pools.jsonl")
        assert load_pools(tmp_path / "pools.jsonl") == a

    def test_bad_header(self, tmp_path):
        (tmp_path / "p.jsonl").write_text('{"subchannel": "S"}\n')
        with pytest.raises(InputError):
            load_pools(tmp_path / "p.jsonl")

    def test_patch_sentinel_flag(self):
        assert AnchorPatch("N_B", ()).is_sentinel
        assert not AnchorPatch("N_B", (1,)).is_sentinel
