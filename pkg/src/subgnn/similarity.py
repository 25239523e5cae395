"""Channel similarity functions and the precomputed similarity cache.

Position and neighborhood similarities are ``1 / (d + 1)`` with ``d`` the
average hop distance between a component and a patch (``inf`` maps to 0).
Structure similarity is ``1 / (DTW + 1)`` between non-increasing degree
sequences.
"""

from __future__ import annotations

import json
import os
import struct
from collections.abc import Sequence
from dataclasses import dataclass

import numba
import numpy as np

from . import graph as gc
from .anchors import AnchorPatch, AnchorPools
from .errors import InputError, RunError
from .graph import Graph

CACHE_SUBCHANNELS = ("P_I", "P_B", "N_I", "N_B", "S_I", "S_B")
NORMALIZATIONS = ("path_length", "max_length", "none")
_MAGIC = b"SGSC"
_VERSION = 1


def _inv(d: float) -> float:
    return 0.0 if not np.isfinite(d) else 1.0 / (d + 1.0)


def gamma_position(graph: Graph, component: Sequence[int], patch: AnchorPatch) -> float:
    if patch.subchannel not in ("P_I", "P_B"):
        raise InputError(f"gamma_position needs a position patch, got {patch.subchannel}")
    return _inv(gc.avg_shortest_path(graph, component, patch.nodes))


def gamma_neighborhood(graph: Graph, component: Sequence[int], patch: AnchorPatch,
                       internal_constant: bool = True) -> float:
    """Neighborhood similarity; sentinel patches give 0.

    Internal patches are drawn from the component itself, so by default they
    get the constant 1. ``internal_constant=False`` averages the distances from
    every component node instead.
    """
    if patch.subchannel not in ("N_I", "N_B"):
        raise InputError(f"gamma_neighborhood needs a neighborhood patch, got {patch.subchannel}")
    if patch.is_sentinel:
        return 0.0
    if patch.subchannel == "N_I" and internal_constant:
        return 1.0
    return _inv(gc.avg_shortest_path(graph, component, patch.nodes))


def degree_sequence(graph: Graph, nodes: Sequence[int], mode: str) -> np.ndarray:
    """Per-node edge counts into the set (``internal``) or out of it (``border``), sorted descending."""
    arr = np.unique(np.asarray(list(nodes), dtype=np.int64))
    if arr.size == 0:
        raise InputError("degree_sequence needs a non-empty node set")
    member = np.zeros(graph.num_nodes, dtype=bool)
    member[arr] = True
    ptr, idx = graph._indptr, graph._indices
    inside = np.array([np.count_nonzero(member[idx[ptr[u]:ptr[u + 1]]]) for u in arr.tolist()], dtype=np.int64)
    if mode == "internal":
        out = inside
    elif mode == "border":
        out = graph.degrees()[arr] - inside
    else:
        raise InputError(f"unknown degree mode {mode!r}")
    return np.sort(out)[::-1].copy()


@numba.njit(cache=True)
def _dtw_table(a, b):
    n, m = a.shape[0], b.shape[0]
    cost = np.full((n + 1, m + 1), np.inf)
    length = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            # (cost, length) lexicographic minimum over the three predecessors
            bc = cost[i - 1, j - 1]
            bl = length[i - 1, j - 1]
            c = cost[i - 1, j]
            ln = length[i - 1, j]
            if c < bc or (c == bc and ln < bl):
                bc, bl = c, ln
            c = cost[i, j - 1]
            ln = length[i, j - 1]
            if c < bc or (c == bc and ln < bl):
                bc, bl = c, ln
            cost[i, j] = bc + abs(a[i - 1] - b[j - 1])
            length[i, j] = bl + 1
    return cost[n, m], length[n, m]


def dtw_path(a: Sequence[float], b: Sequence[float]) -> tuple[float, int]:
    """Optimal warping cost and the length of the shortest optimal path."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InputError("dtw needs two non-empty sequences")
    cost, length = _dtw_table(a, b)
    return float(cost), int(length)


def dtw(a: Sequence[float], b: Sequence[float], normalization: str = "path_length") -> float:
    """DTW with absolute-difference cost and steps (1,0), (0,1), (1,1).

    ``path_length`` divides by the optimal path length, ``max_length`` by
    ``max(len(a), len(b))``; ``none`` returns the raw cost.
    """
    cost, length = dtw_path(a, b)
    if normalization == "path_length":
        return cost / length
    if normalization == "max_length":
        return cost / max(len(a), len(b))
    if normalization == "none":
        return cost
    raise InputError(f"unknown DTW normalization {normalization!r}")


def gamma_structure(graph: Graph, component: Sequence[int], patch: AnchorPatch, mode: str,
                    normalization: str = "path_length") -> float:
    if patch.subchannel != "S":
        raise InputError(f"gamma_structure needs a structure patch, got {patch.subchannel}")
    da = degree_sequence(graph, component, mode)
    db = degree_sequence(graph, patch.nodes, mode)
    return 1.0 / (dtw(da, db, normalization) + 1.0)


# -------------------------------------------------------------------- cache


@dataclass(frozen=True)
class SimilarityConfig:
    normalization: str = "path_length"
    internal_neighborhood_constant: bool = True

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise InputError(f"normalization must be one of {NORMALIZATIONS}")


class SimilarityCache:
    """Dense ``(component, pool patch, subchannel)`` table of float32 similarities."""

    def __init__(self, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 3 or values.shape[2] != len(CACHE_SUBCHANNELS):
            raise InputError(f"cache table must be (C, P, {len(CACHE_SUBCHANNELS)}), got {values.shape}")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise InputError("similarities must lie in [0, 1]")
        values.setflags(write=False)
        self.values = values

    @property
    def num_components(self) -> int:
        return self.values.shape[0]

    @property
    def pool_size(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.size

    def table(self, subchannel: str) -> np.ndarray:
        return self.values[:, :, CACHE_SUBCHANNELS.index(subchannel)]

    def lookup(self, component: int, pool_index: int, subchannel: str) -> float:
        if subchannel not in CACHE_SUBCHANNELS:
            raise RunError(f"no cached similarities for subchannel {subchannel!r}")
        if not (0 <= component < self.num_components and 0 <= pool_index < self.pool_size):
            raise RunError(f"similarity cache miss: component={component} patch={pool_index} {subchannel}")
        return float(self.values[component, pool_index, CACHE_SUBCHANNELS.index(subchannel)])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SimilarityCache) and np.array_equal(self.values, other.values)

    def save(self, path: str | os.PathLike) -> None:
        C, P, K = self.values.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIII", _VERSION, C, P, K))
            fh.write(self.values.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SimilarityCache":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != _MAGIC:
            raise InputError(f"{path}: not a similarity cache (bad magic)")
        if len(blob) < 20:
            raise InputError(f"{path}: truncated header")
        version, C, P, K = struct.unpack("<IIII", blob[4:20])
        if version != _VERSION:
            raise InputError(f"{path}: unsupported cache version {version}")
        need = 20 + 4 * C * P * K
        if len(blob) != need:
            raise InputError(f"{path}: expected {need} bytes, found {len(blob)}")
        vals = np.frombuffer(blob, dtype="<f4", offset=20).reshape(C, P, K)
        return cls(vals.astype(np.float32))

    def dump_json(self, path: str | os.PathLike) -> None:
        out = {
            "subchannels": list(CACHE_SUBCHANNELS),
            "num_components": self.num_components,
            "pool_size": self.pool_size,
            "values": {sc: self.table(sc).tolist() for sc in CACHE_SUBCHANNELS},
        }
        with open(path, "w") as fh:
            json.dump(out, fh)


def _fill_distance_similarities(graph: Graph, comps: list[np.ndarray], requests: list[tuple[int, int, int, int]],
                                out: np.ndarray, chunk: int = 256) -> None:
    """Resolve ``(source node, component, pool index, subchannel)`` requests by chunked BFS."""
    if not requests:
        return
    req = np.asarray(requests, dtype=np.int64)
    req = req[np.lexsort((req[:, 3], req[:, 2], req[:, 1], req[:, 0]))]
    uniq, starts = np.unique(req[:, 0], return_index=True)
    bounds = np.append(starts, len(req))
    for i in range(0, len(uniq), chunk):
        block = uniq[i:i + chunk]
        D = gc.pairwise_distances(graph, block)
        for r, u in enumerate(block.tolist()):
            lo, hi = bounds[i + r], bounds[i + r + 1]
            row = D[r]
            for _, c, j, k in req[lo:hi].tolist():
                d = row[comps[c]]
                out[c, j, k] = _inv(float(d.mean())) if np.isfinite(d).all() else 0.0


def precompute(graph: Graph, components: Sequence[Sequence[int]], component_owner: Sequence[int],
               pools: AnchorPools, config: SimilarityConfig | None = None) -> SimilarityCache:
    """Fill the cache for every (component, pool patch, subchannel) combination.

    ``component_owner[c]`` is the subgraph index of component ``c``; it selects
    that subgraph's internal-position pool.
    """
    config = config or SimilarityConfig()
    C, P = len(components), pools.pool_size
    vals = np.zeros((C, P, len(CACHE_SUBCHANNELS)))
    comps = [np.asarray(sorted(c), dtype=np.int64) for c in components]

    pb_nodes = pools.position_border_nodes()
    pi = pools.node_matrix("P_I")
    ni = pools.node_matrix("N_I")
    nb = pools.node_matrix("N_B")
    requests = []
    for c in range(C):
        owner = component_owner[c]
        for j in range(P):
            requests.append((int(pi[owner, j]), c, j, 0))
            requests.append((int(pb_nodes[j]), c, j, 1))
            if not config.internal_neighborhood_constant:
                requests.append((int(ni[c, j]), c, j, 2))
            if nb[c, j] >= 0:
                requests.append((int(nb[c, j]), c, j, 3))
    if config.internal_neighborhood_constant:
        vals[:, :, 2] = 1.0
    _fill_distance_similarities(graph, comps, requests, vals)

    for k, mode in ((4, "internal"), (5, "border")):
        patch_seqs = [degree_sequence(graph, p.nodes, mode).astype(np.float64) for p in pools.structure]
        for c, comp in enumerate(comps):
            cs = degree_sequence(graph, comp, mode).astype(np.float64)
            for j, ps in enumerate(patch_seqs):
                cost, length = _dtw_table(cs, ps)
                if config.normalization == "path_length":
                    d = cost / length
                elif config.normalization == "max_length":
                    d = cost / max(len(cs), len(ps))
                else:
                    d = cost
                vals[c, j, k] = 1.0 / (d + 1.0)
    return SimilarityCache(vals)
