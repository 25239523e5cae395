"""Anchor-patch samplers and the triangular random walk.

Subchannels: ``P_I``/``P_B`` (position), ``N_I``/``N_B`` (neighborhood) and
``S`` (structure; one pool serves both internal and border structure).
Position and neighborhood patches are single nodes; structure patches are the
node sets visited by one triangular walk.
"""

from __future__ import annotations

import json
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import graph as gc
from .errors import InputError
from .graph import Graph

SUBCHANNELS = ("P_I", "P_B", "N_I", "N_B", "S")


@dataclass(frozen=True)
class AnchorPatch:
    subchannel: str
    nodes: tuple[int, ...]
    pool_index: int = 0

    @property
    def is_sentinel(self) -> bool:
        return len(self.nodes) == 0


@dataclass(frozen=True)
class WalkConfig:
    beta: float = 0.65
    walk_length: int = 10
    num_walks: int = 5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InputError("beta must lie in [0, 1]")
        if self.walk_length < 1 or self.num_walks < 1:
            raise InputError("walk_length and num_walks must be >= 1")


def _pick(seq: Sequence[int], rng: np.random.Generator) -> int:
    return seq[int(rng.integers(0, len(seq)))]


def successor_law(graph: Graph, prev: int, cur: int, beta: float,
                  allowed: set[int] | frozenset[int] | None = None) -> dict[int, float]:
    """Exact next-step distribution of the triangular walk given ``(prev, cur)``.

    Triangular successors ``N(cur) & N(prev)`` share mass ``beta``; the rest of
    ``N(cur)`` (including ``prev``) shares ``1 - beta``. When one side is empty
    the other takes all the mass; an empty dict means the walk halts.
    """
    nc = graph.neighbor_set(cur)
    np_ = graph.neighbor_set(prev)
    if allowed is not None:
        nc = nc & allowed
    tri = sorted(nc & np_)
    non = sorted(nc - np_)
    if tri and non:
        law = {z: beta / len(tri) for z in tri}
        law.update({z: (1.0 - beta) / len(non) for z in non})
        return law
    side = tri or non
    return {z: 1.0 / len(side) for z in side}


def triangular_walk(graph: Graph, starts: Sequence[int], walk_length: int, beta: float,
                    rng: np.random.Generator, allowed: Iterable[int] | None = None,
                    first_step: Iterable[int] | None = None) -> list[int]:
    """Sample ``X_0..X_L`` of a triangular random walk.

    ``X_0`` is uniform over ``starts``; ``X_1`` is uniform over the neighbors of
    ``X_0`` that lie in ``first_step`` (defaults to ``allowed``); later steps
    follow ``successor_law`` restricted to ``allowed``. The walk stops early
    when no successor exists.
    """
    if len(starts) == 0:
        raise InputError("empty start distribution")
    allow = frozenset(allowed) if allowed is not None else None
    first = frozenset(first_step) if first_step is not None else allow
    x0 = int(_pick(list(starts), rng))
    walk = [x0]
    nb = graph.neighbor_set(x0)
    cand = sorted(nb & first if first is not None else nb)
    if not cand or walk_length < 1:
        return walk
    walk.append(_pick(cand, rng))
    while len(walk) <= walk_length:
        x, y = walk[-2], walk[-1]
        ny = graph.neighbor_set(y)
        if allow is not None:
            ny = ny & allow
        nx_ = graph.neighbor_set(x)
        tri = sorted(ny & nx_)
        non = sorted(ny - nx_)
        if not tri and not non:
            break
        if tri and non:
            side = tri if rng.random() < beta else non
        else:
            side = tri or non
        walk.append(_pick(side, rng))
    return walk


# ----------------------------------------------------------------- samplers


def sample_position_internal(subgraph_nodes: Sequence[int], rng: np.random.Generator,
                             pool_index: int = 0) -> AnchorPatch:
    if len(subgraph_nodes) == 0:
        raise InputError("empty subgraph")
    return AnchorPatch("P_I", (int(_pick(list(subgraph_nodes), rng)),), pool_index)


def sample_position_border(graph: Graph, rng: np.random.Generator, pool_index: int = 0) -> AnchorPatch:
    if graph.num_nodes == 0:
        raise InputError("empty graph")
    return AnchorPatch("P_B", (int(rng.integers(0, graph.num_nodes)),), pool_index)


def sample_neighborhood(graph: Graph, component: Sequence[int], k: int, border: bool,
                        rng: np.random.Generator, pool_index: int = 0,
                        hood: Sequence[int] | None = None) -> AnchorPatch:
    """Internal: uniform component node. Border: uniform node of the k-hop shell.

    An empty shell yields a sentinel patch with no nodes. ``hood`` lets callers
    pass a precomputed sorted shell.
    """
    if len(component) == 0:
        raise InputError("empty component")
    if not border:
        return AnchorPatch("N_I", (int(_pick(sorted(component), rng)),), pool_index)
    if hood is None:
        hood = sorted(gc.khop_neighborhood(graph, component, k))
    if not hood:
        return AnchorPatch("N_B", (), pool_index)
    return AnchorPatch("N_B", (int(_pick(hood, rng)),), pool_index)


def sample_structure(graph: Graph, walk_config: WalkConfig, rng: np.random.Generator,
                     pool_index: int = 0) -> AnchorPatch:
    """Distinct nodes of one triangular walk from a uniform start."""
    if graph.num_nodes == 0:
        raise InputError("empty graph")
    walk = triangular_walk(graph, range(graph.num_nodes), walk_config.walk_length,
                           walk_config.beta, rng)
    return AnchorPatch("S", tuple(sorted(set(walk))), pool_index)


def structure_walks(graph: Graph, nodes: Sequence[int], walk_config: WalkConfig, mode: str,
                    k: int, rng: np.random.Generator) -> list[list[int]]:
    """Walks used to encode a structure patch.

    ``internal`` walks stay inside the patch. ``border`` walks start on a patch
    node that has an external neighbor, step first into the external
    neighborhood (external nodes within ``k`` hops) and then roam over border
    plus external nodes. Returns ``[]`` when a border walk cannot start.
    """
    inside = set(int(u) for u in nodes)
    if mode == "internal":
        allowed = inside
        starts = sorted(inside)
        first = None
    elif mode == "border":
        ext = gc.khop_neighborhood(graph, inside, k)
        starts = sorted(u for u in inside if graph.neighbor_set(u) & ext)
        if not starts:
            return []
        allowed = set(starts) | ext
        first = ext
    else:
        raise InputError(f"unknown walk mode {mode!r}")
    return [
        triangular_walk(graph, starts, walk_config.walk_length, walk_config.beta, rng,
                        allowed=allowed, first_step=first)
        for _ in range(walk_config.num_walks)
    ]


# -------------------------------------------------------------------- pools


@dataclass
class PoolConfig:
    pool_size: int = 50
    k: int = 1
    sample_walk: WalkConfig = field(default_factory=lambda: WalkConfig(walk_length=10, num_walks=1))
    encode_walk: WalkConfig = field(default_factory=WalkConfig)

    def __post_init__(self):
        if self.pool_size < 1:
            raise InputError("pool_size must be >= 1")
        if self.k < 1:
            raise InputError("k must be >= 1")


@dataclass
class AnchorPools:
    """Pre-sampled anchor patches for every context the model can request.

    ``position_internal[s]`` belongs to subgraph ``s``; ``neighborhood_*[c]`` to
    component ``c``; ``position_border`` and ``structure`` are global. Each
    structure patch carries its internal and border encoding walks.
    """

    config: PoolConfig
    position_border: list[AnchorPatch]
    structure: list[AnchorPatch]
    structure_walks: dict[str, list[list[list[int]]]]
    position_internal: list[list[AnchorPatch]]
    neighborhood_internal: list[list[AnchorPatch]]
    neighborhood_border: list[list[AnchorPatch]]

    @property
    def pool_size(self) -> int:
        return self.config.pool_size

    def node_matrix(self, which: str) -> np.ndarray:
        """Node ids of single-node pools as an int array (``-1`` marks sentinels)."""
        rows = {
            "P_I": self.position_internal,
            "N_I": self.neighborhood_internal,
            "N_B": self.neighborhood_border,
        }[which]
        return np.array([[p.nodes[0] if p.nodes else -1 for p in row] for row in rows], dtype=np.int64)

    def position_border_nodes(self) -> np.ndarray:
        return np.array([p.nodes[0] for p in self.position_border], dtype=np.int64)


def stream(seed: int, *offsets: int) -> np.random.Generator:
    """Independent generator for a stage/worker, derived from the master seed."""
    return np.random.default_rng([int(seed), *offsets])


def build_pools(graph: Graph, subgraph_components: Sequence[Sequence[Sequence[int]]],
                config: PoolConfig, seed: int) -> AnchorPools:
    """Sample every pool from independent seeded streams.

    ``subgraph_components[s]`` lists the components of subgraph ``s``; the
    component order defines global component ids.
    """
    P = config.pool_size
    rng = stream(seed, 101)
    pb = [sample_position_border(graph, rng, i) for i in range(P)]
    rng = stream(seed, 102)
    st = [sample_structure(graph, config.sample_walk, rng, i) for i in range(P)]
    walks = {}
    for off, mode in ((103, "internal"), (104, "border")):
        rng = stream(seed, off)
        walks[mode] = [structure_walks(graph, p.nodes, config.encode_walk, mode, config.k, rng) for p in st]
    rng = stream(seed, 105)
    pi = []
    for comps in subgraph_components:
        nodes = sorted(u for c in comps for u in c)
        pi.append([sample_position_internal(nodes, rng, i) for i in range(P)])
    rng_i = stream(seed, 106)
    rng_b = stream(seed, 107)
    ni, nb = [], []
    for comps in subgraph_components:
        for comp in comps:
            ni.append([sample_neighborhood(graph, comp, config.k, False, rng_i, i) for i in range(P)])
            hood = sorted(gc.khop_neighborhood(graph, comp, config.k))
            nb.append([sample_neighborhood(graph, comp, config.k, True, rng_b, i, hood=hood) for i in range(P)])
    return AnchorPools(config, pb, st, walks, pi, ni, nb)


def save_pools(pools: AnchorPools, path: str | os.PathLike) -> None:
    """JSON lines: one header, then one line per patch."""
    cfg = pools.config
    with open(path, "w") as fh:
        header = {
            "kind": "header",
            "pool_size": cfg.pool_size,
            "k": cfg.k,
            "sample_walk": vars(cfg.sample_walk),
            "encode_walk": vars(cfg.encode_walk),
            "num_subgraphs": len(pools.position_internal),
            "num_components": len(pools.neighborhood_internal),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for p in pools.position_border:
            fh.write(json.dumps({"subchannel": "P_B", "pool_index": p.pool_index, "nodes": list(p.nodes)}) + "\n")
        for i, p in enumerate(pools.structure):
            rec = {"subchannel": "S", "pool_index": p.pool_index, "nodes": list(p.nodes),
                   "walks_internal": pools.structure_walks["internal"][i],
                   "walks_border": pools.structure_walks["border"][i]}
            fh.write(json.dumps(rec) + "\n")
        for name, rows in (("P_I", pools.position_internal), ("N_I", pools.neighborhood_internal),
                           ("N_B", pools.neighborhood_border)):
            for owner, row in enumerate(rows):
                for p in row:
                    fh.write(json.dumps({"subchannel": name, "owner": owner, "pool_index": p.pool_index,
                                         "nodes": list(p.nodes)}) + "\n")


def load_pools(path: str | os.PathLike) -> AnchorPools:
    with open(path) as fh:
        lines = [json.loads(x) for x in fh if x.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise InputError(f"{path}: missing pool header")
    h = lines[0]
    cfg = PoolConfig(h["pool_size"], h["k"], WalkConfig(**h["sample_walk"]), WalkConfig(**h["encode_walk"]))
    pb, st = [], []
    walks = {"internal": [], "border": []}
    rows = {"P_I": [[] for _ in range(h["num_subgraphs"])],
            "N_I": [[] for _ in range(h["num_components"])],
            "N_B": [[] for _ in range(h["num_components"])]}
    for rec in lines[1:]:
        patch = AnchorPatch(rec["subchannel"], tuple(rec["nodes"]), rec["pool_index"])
        if rec["subchannel"] == "P_B":
            pb.append(patch)
        elif rec["subchannel"] == "S":
            st.append(patch)
            walks["internal"].append(rec["walks_internal"])
            walks["border"].append(rec["walks_border"])
        else:
            rows[rec["subchannel"]][rec["owner"]].append(patch)
    return AnchorPools(cfg, pb, st, walks, rows["P_I"], rows["N_I"], rows["N_B"])
