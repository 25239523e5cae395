"""Immutable undirected graph plus the subgraph metrics built on top of it.

Node ids are dense integers in ``[0, num_nodes)``. Every query takes node sets
as any iterable of ints; results never depend on the iteration order of the
input.
"""

from __future__ import annotations

import os
import re
from collections.abc import Iterable
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InputError


class Graph:
    """Simple undirected graph with sorted adjacency arrays.

    Construction canonicalizes the edge list: self-loops and duplicates are
    dropped and every edge is stored in both directions.
    """

    def __init__(self, num_nodes: int, edges: Iterable[tuple[int, int]] | np.ndarray = ()):
        if num_nodes < 0:
            raise InputError(f"num_nodes must be non-negative, got {num_nodes}")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
            raise InputError(f"edge endpoint outside [0, {num_nodes})")
        arr = arr[arr[:, 0] != arr[:, 1]]
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(arr) else np.zeros((0, 2), np.int64)
        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])

        self._n = int(num_nodes)
        self._m = int(len(und))
        self._indptr = indptr
        self._indices = dst
        self._indptr.setflags(write=False)
        self._indices.setflags(write=False)
        self._edges = und
        self._edges.setflags(write=False)
        self._csr: sp.csr_matrix | None = None
        self._nbr_sets: list[frozenset[int]] | None = None

    @property
    def num_nodes(self) -> int:
        return self._n

    @property
    def num_edges(self) -> int:
        return self._m

    @property
    def edges(self) -> np.ndarray:
        """``(num_edges, 2)`` array with ``u < v`` per row, lexicographically sorted."""
        return self._edges

    def neighbors(self, u: int) -> np.ndarray:
        return self._indices[self._indptr[u]:self._indptr[u + 1]]

    def neighbor_set(self, u: int) -> frozenset[int]:
        if self._nbr_sets is None:
            self._nbr_sets = [frozenset(self.neighbors(v).tolist()) for v in range(self._n)]
        return self._nbr_sets[u]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self._n)]

    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    def degree(self, u: int) -> int:
        return int(self._indptr[u + 1] - self._indptr[u])

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            data = np.ones(len(self._indices), dtype=np.int8)
            self._csr = sp.csr_matrix((data, self._indices, self._indptr), shape=(self._n, self._n))
        return self._csr

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self._n}, num_edges={self._m})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Graph)
            and self._n == other._n
            and np.array_equal(self._edges, other._edges)
        )

    def __hash__(self) -> int:
        return hash((self._n, self._m))


def _as_node_array(graph: Graph, nodes: Iterable[int]) -> np.ndarray:
    arr = np.unique(np.fromiter((int(u) for u in nodes), dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= graph.num_nodes):
        bad = arr[(arr < 0) | (arr >= graph.num_nodes)][0]
        raise InputError(f"unknown node id {bad}")
    return arr


def _mask(graph: Graph, arr: np.ndarray) -> np.ndarray:
    m = np.zeros(graph.num_nodes, dtype=bool)
    m[arr] = True
    return m


def induced_edge_count(graph: Graph, nodes: Iterable[int]) -> int:
    arr = _as_node_array(graph, nodes)
    m = _mask(graph, arr)
    e = graph.edges
    return int(np.count_nonzero(m[e[:, 0]] & m[e[:, 1]]))


def connected_components(graph: Graph, nodes: Iterable[int]) -> list[list[int]]:
    """Maximal connected node sets of the subgraph induced by ``nodes``.

    Each component is sorted; components are ordered by their smallest member.
    """
    arr = _as_node_array(graph, nodes)
    members = set(arr.tolist())
    seen: set[int] = set()
    comps = []
    for s in arr.tolist():
        if s in seen:
            continue
        seen.add(s)
        stack = [s]
        comp = [s]
        while stack:
            u = stack.pop()
            for v in graph.neighbors(u).tolist():
                if v in members and v not in seen:
                    seen.add(v)
                    stack.append(v)
                    comp.append(v)
        comps.append(sorted(comp))
    return comps


def density(graph: Graph, nodes: Iterable[int]) -> float:
    """Induced edge density ``2e / (n(n-1))``; 0 for sets of size 0 or 1."""
    arr = _as_node_array(graph, nodes)
    n = len(arr)
    if n < 2:
        return 0.0
    return 2.0 * induced_edge_count(graph, arr) / (n * (n - 1))


def border_edge_count(graph: Graph, nodes: Iterable[int]) -> int:
    arr = _as_node_array(graph, nodes)
    m = _mask(graph, arr)
    e = graph.edges
    return int(np.count_nonzero(m[e[:, 0]] != m[e[:, 1]]))


def cut_ratio(graph: Graph, nodes: Iterable[int]) -> float:
    """Border edges normalized by ``|S| * |V \\ S|``."""
    arr = _as_node_array(graph, nodes)
    n = len(arr)
    if n == 0 or n == graph.num_nodes:
        raise DomainError("cut ratio undefined for the empty set or the full node set")
    return border_edge_count(graph, arr) / (n * (graph.num_nodes - n))


def core_numbers(graph: Graph) -> np.ndarray:
    """Core number of every node, by bucketed minimum-degree peeling."""
    n = graph.num_nodes
    deg = graph.degrees().astype(np.int64).copy()
    if n == 0:
        return deg
    # bucket sort nodes by degree (Batagelj-Zaversnik)
    maxd = int(deg.max())
    bin_start = np.zeros(maxd + 2, dtype=np.int64)
    np.cumsum(np.bincount(deg, minlength=maxd + 1), out=bin_start[1:])
    order = np.argsort(deg, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    vert = order.tolist()
    pos_l = pos.tolist()
    deg_l = deg.tolist()
    bin_l = bin_start[:-1].tolist()
    indptr = graph._indptr.tolist()
    indices = graph._indices.tolist()
    for i in range(n):
        v = vert[i]
        dv = deg_l[v]
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            du = deg_l[u]
            if du > dv:
                pu = pos_l[u]
                pw = bin_l[du]
                w = vert[pw]
                if u != w:
                    vert[pu], vert[pw] = w, u
                    pos_l[u], pos_l[w] = pw, pu
                bin_l[du] += 1
                deg_l[u] = du - 1
    return np.asarray(deg_l, dtype=np.int64)


@dataclass(frozen=True)
class DistanceIndex:
    """Hop distances from a source set to every node (``inf`` if unreachable)."""

    sources: tuple[int, ...]
    distances: np.ndarray = field(repr=False)

    def __getitem__(self, v: int) -> float:
        return float(self.distances[v])


def multi_source_bfs(graph: Graph, sources: Iterable[int], max_depth: int | None = None) -> DistanceIndex:
    """Unweighted BFS distances from the nearest member of ``sources``.

    Nodes beyond ``max_depth`` (when given) are reported as ``inf``.
    """
    arr = _as_node_array(graph, sources)
    dist = np.full(graph.num_nodes, np.inf)
    dist[arr] = 0.0
    if arr.size == 0:
        return DistanceIndex((), dist)
    A = graph.csr()
    visited = _mask(graph, arr)
    frontier = visited.astype(np.int8)
    depth = 0
    while frontier.any():
        if max_depth is not None and depth >= max_depth:
            break
        depth += 1
        nxt = (A @ frontier > 0) & ~visited
        if not nxt.any():
            break
        dist[nxt] = depth
        visited |= nxt
        frontier = nxt.astype(np.int8)
    dist.setflags(write=False)
    return DistanceIndex(tuple(arr.tolist()), dist)


class DistanceCache:
    """Write-once cache of ``DistanceIndex`` objects keyed by source set."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self._store: dict[frozenset[int], DistanceIndex] = {}

    def get(self, sources: Iterable[int]) -> DistanceIndex:
        key = frozenset(int(u) for u in sources)
        idx = self._store.get(key)
        if idx is None:
            idx = multi_source_bfs(self.graph, key)
            self._store[key] = idx
        return idx

    def __len__(self) -> int:
        return len(self._store)


def khop_neighborhood(graph: Graph, nodes: Iterable[int], k: int) -> set[int]:
    """Nodes at hop distance ``1..k`` from any member of ``nodes``."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    arr = _as_node_array(graph, nodes)
    members = set(arr.tolist())
    frontier = members
    seen = set(members)
    out: set[int] = set()
    for _ in range(k):
        nxt = set()
        for u in frontier:
            for v in graph.neighbors(u).tolist():
                if v not in seen:
                    seen.add(v)
                    nxt.add(v)
        out |= nxt
        frontier = nxt
        if not frontier:
            break
    return out


@numba.njit(cache=True)
def _bfs_rows(indptr, indices, sources, n):
    out = np.full((sources.shape[0], n), np.inf)
    queue = np.empty(n, dtype=np.int64)
    for r in range(sources.shape[0]):
        row = out[r]
        s = sources[r]
        row[s] = 0.0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            du = row[u] + 1.0
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if row[v] == np.inf:
                    row[v] = du
                    queue[tail] = v
                    tail += 1
    return out


def pairwise_distances(graph: Graph, sources: Iterable[int]) -> np.ndarray:
    """``(len(sources), num_nodes)`` hop-distance matrix, sources in sorted order."""
    arr = _as_node_array(graph, sources)
    if arr.size == 0:
        return np.zeros((0, graph.num_nodes))
    return _bfs_rows(graph._indptr.astype(np.int64), graph._indices.astype(np.int64), arr, graph.num_nodes)


def avg_shortest_path(graph: Graph, from_nodes: Iterable[int], to_nodes: Iterable[int]) -> float:
    """Mean hop distance over all pairs in ``from_nodes x to_nodes``.

    Returns ``inf`` when any pair is disconnected.
    """
    a = _as_node_array(graph, from_nodes)
    b = _as_node_array(graph, to_nodes)
    if a.size == 0 or b.size == 0:
        raise InputError("avg_shortest_path needs two non-empty node sets")
    if len(a) > len(b):
        a, b = b, a
    d = pairwise_distances(graph, a)[:, b]
    return float(d.mean()) if np.isfinite(d).all() else float("inf")


def read_edge_list(path: str | os.PathLike, num_nodes: int | None = None) -> Graph:
    """Load a whitespace-separated edge list; ``#`` lines are comments."""
    pairs = []
    declared = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                hdr = re.match(r"#\s*nodes\s+(\d+)", s)
                if hdr and num_nodes is None:
                    declared = int(hdr.group(1))
                continue
            parts = s.split()
            if len(parts) < 2:
                raise InputError(f"{path}:{lineno}: expected two node ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-integer node id") from exc
            if u < 0 or v < 0:
                raise InputError(f"{path}:{lineno}: negative node id")
            pairs.append((u, v))
    inferred = 1 + max((max(p) for p in pairs), default=-1)
    n = max(inferred, declared) if num_nodes is None else max(num_nodes, inferred)
    return Graph(n, pairs)


def write_edge_list(graph: Graph, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(f"# nodes {graph.num_nodes} edges {graph.num_edges}\n")
        for u, v in graph.edges.tolist():
            fh.write(f"{u} {v}\n")
