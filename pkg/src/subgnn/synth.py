"""Synthetic subgraph benchmarks: base-graph models, attachment procedures, labels.

Four tasks are supported (``density``, ``cut_ratio``, ``coreness``,
``component``). Every generator draws from a single ``numpy.random.Generator``
so a dataset is a pure function of its config.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import graph as gc
from .errors import InputError
from .graph import Graph

TASKS = ("density", "cut_ratio", "coreness", "component")
SPLITS = ("train", "val", "test")


@dataclass
class SynthConfig:
    task: str
    seed: int = 0
    num_subgraphs: int | None = None
    subgraph_size: int | None = None
    base_nodes: int | None = None
    ba_m: int | None = None
    retain_p: float = 0.7
    triad_p: float | None = None
    bin_count: int | None = None
    bfs_depth: int = 3
    max_components: int = 10

    def __post_init__(self):
        if self.task not in TASKS:
            raise InputError(f"unknown task {self.task!r}; expected one of {TASKS}")
        defaults = {
            "density": dict(num_subgraphs=250, subgraph_size=20, base_nodes=5000, ba_m=5, bin_count=3),
            "cut_ratio": dict(num_subgraphs=250, subgraph_size=20, base_nodes=5000, ba_m=5, bin_count=3),
            "coreness": dict(num_subgraphs=221, subgraph_size=20, base_nodes=5000, ba_m=1, bin_count=3),
            "component": dict(num_subgraphs=250, subgraph_size=15, base_nodes=1000, ba_m=1, bin_count=2),
        }[self.task]
        defaults["triad_p"] = 0.9 if self.task == "density" else 0.0
        for k, v in defaults.items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        if self.num_subgraphs <= 0:
            raise InputError("num_subgraphs must be positive")
        if self.subgraph_size < 2:
            raise InputError("subgraph_size must be >= 2")
        if self.ba_m < 1:
            raise InputError("BA m must be >= 1")
        if not 0.0 < self.retain_p < 1.0:
            raise InputError("retention probability must lie in (0, 1)")
        if self.task == "component":
            if self.bin_count != 2:
                raise InputError("component task is binary (single vs multiple)")
        elif self.bin_count not in (2, 3):
            raise InputError("bin_count must be 2 or 3")
        if self.base_nodes <= self.ba_m:
            raise InputError("base_nodes must exceed BA m")


@dataclass
class SubgraphRecord:
    nodes: list[int]
    labels: list[int]
    split: str


@dataclass
class Dataset:
    graph: Graph
    subgraphs: list[SubgraphRecord]
    label_names: list[str]
    meta: dict = field(default_factory=dict)

    @property
    def multilabel(self) -> bool:
        return bool(self.meta.get("multilabel", False))


# ---------------------------------------------------------------- base graphs


class _Builder:
    """Mutable adjacency-set graph used while a dataset is being assembled."""

    def __init__(self, n: int = 0, edges=()):
        self.adj: list[set[int]] = [set() for _ in range(n)]
        self.edge_list: list[tuple[int, int]] = []
        for u, v in edges:
            self.add_edge(u, v)

    @classmethod
    def from_graph(cls, g: Graph) -> "_Builder":
        b = cls(g.num_nodes)
        b.adj = [set(g.neighbors(u).tolist()) for u in range(g.num_nodes)]
        b.edge_list = [tuple(e) for e in g.edges.tolist()]
        return b

    @property
    def num_nodes(self) -> int:
        return len(self.adj)

    def add_nodes(self, k: int) -> int:
        first = len(self.adj)
        self.adj.extend(set() for _ in range(k))
        return first

    def add_edge(self, u: int, v: int) -> None:
        if u != v and v not in self.adj[u]:
            self.adj[u].add(v)
            self.adj[v].add(u)
            self.edge_list.append((u, v))

    def random_edge(self, rng) -> tuple[int, int]:
        return self.edge_list[int(rng.integers(0, len(self.edge_list)))]

    def to_graph(self) -> Graph:
        return Graph(len(self.adj), self.edge_list)


def gen_barabasi_albert(n: int, m: int, rng: np.random.Generator, triad_p: float = 0.0) -> Graph:
    """Preferential attachment from an (m+1)-clique; m distinct targets per new node.

    ``triad_p > 0`` turns on Holme-Kim triad formation: after a preferential
    step, each further edge goes to a random neighbor of the last preferential
    target with probability ``triad_p``. The edge count is unchanged.
    """
    if m < 1 or n <= m:
        raise InputError(f"BA needs n > m >= 1, got n={n}, m={m}")
    if not 0.0 <= triad_p <= 1.0:
        raise InputError("triad_p must lie in [0, 1]")
    b = _Builder(n, [(u, v) for u in range(m + 1) for v in range(u + 1, m + 1)])
    # each node appears once per incident edge
    repeated = [u for e in b.edge_list for u in e]
    for new in range(m + 1, n):
        targets: list[int] = []
        last = None
        while len(targets) < m:
            if last is not None and triad_p > 0 and rng.random() < triad_p:
                cand = [w for w in sorted(b.adj[last]) if w not in targets]
                if cand:
                    targets.append(cand[int(rng.integers(0, len(cand)))])
                    continue
            t = repeated[int(rng.integers(0, len(repeated)))]
            if t not in targets:
                targets.append(t)
                last = t
        for t in targets:
            b.add_edge(t, new)
            repeated.extend((t, new))
    return b.to_graph()


def gen_duplication_divergence(n: int, retain_p: float, rng: np.random.Generator) -> Graph:
    """Duplication-divergence growth from a single edge.

    A new node picks a uniform template, keeps each of the template's edges
    with probability ``retain_p`` and links to the template itself with the same
    probability. Draws that leave the new node isolated are retried.
    """
    if not 0.0 < retain_p < 1.0:
        raise InputError("retain_p must lie in (0, 1)")
    if n < 2:
        raise InputError("duplication-divergence needs n >= 2")
    adj: list[set[int]] = [{1}, {0}]
    for new in range(2, n):
        while True:
            tmpl = int(rng.integers(0, new))
            nbrs = sorted(adj[tmpl])
            keep = rng.random(len(nbrs)) < retain_p
            chosen = {v for v, k in zip(nbrs, keep.tolist()) if k}
            if rng.random() < retain_p:
                chosen.add(tmpl)
            if chosen:
                break
        adj.append(chosen)
        for v in chosen:
            adj[v].add(new)
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Graph(n, edges)


# ----------------------------------------------------- subgraph attachment


def _grow(adj, num_nodes: int, seed: list[int], size: int, rng: np.random.Generator) -> list[int]:
    """BFS-order ball around ``seed``; tops up with random nodes if the component is small."""
    out = list(seed)
    seen = set(seed)
    queue = deque(seed)
    while queue and len(out) < size:
        u = queue.popleft()
        nbrs = np.array(sorted(adj(u)), dtype=np.int64)
        rng.shuffle(nbrs)
        for v in nbrs.tolist():
            if v not in seen:
                seen.add(v)
                out.append(v)
                queue.append(v)
                if len(out) == size:
                    break
    while len(out) < size:
        w = int(rng.integers(0, num_nodes))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def _plant(b: _Builder, patch: Graph, n_common: int, rng, mode: str) -> list[int]:
    if n_common < 2:
        raise InputError("plant needs n_common >= 2")
    if patch.num_nodes < n_common:
        raise InputError(f"patch has {patch.num_nodes} nodes, fewer than n_common={n_common}")
    if patch.num_edges == 0 or not b.edge_list:
        raise InputError("plant needs an edge on both sides")
    if n_common > b.num_nodes:
        raise InputError("base graph smaller than n_common")
    pu, pv = patch.edges[int(rng.integers(0, patch.num_edges))].tolist()
    patch_side = _grow(lambda u: patch.neighbors(u).tolist(), patch.num_nodes, [pu, pv], n_common, rng)
    bu, bv = b.random_edge(rng)
    if mode == "local":
        base_side = _grow(lambda u: b.adj[u], b.num_nodes, [bu, bv], n_common, rng)
    elif mode == "scatter":
        base_side = [bu, bv]
        chosen = {bu, bv}
        while len(base_side) < n_common:
            w = int(rng.integers(0, b.num_nodes))
            if w not in chosen:
                chosen.add(w)
                base_side.append(w)
    else:
        raise InputError(f"unknown plant mode {mode!r}")
    mapping = dict(zip(patch_side, base_side))
    first = b.add_nodes(patch.num_nodes - n_common)
    fresh = iter(range(first, b.num_nodes))
    for u in range(patch.num_nodes):
        if u not in mapping:
            mapping[u] = next(fresh)
    for u, v in patch.edges.tolist():
        b.add_edge(mapping[u], mapping[v])
    return sorted(mapping.values())


def plant(base: Graph, patch: Graph, n_common: int, rng: np.random.Generator,
          mode: str = "local") -> tuple[Graph, list[int]]:
    """Overlay ``patch`` on ``base`` by identifying ``n_common`` node pairs.

    The identified patch nodes are a connected ball around a random patch edge.
    The matched base nodes always include both ends of a random base edge;
    ``mode="local"`` grows them as a BFS ball around that edge, ``"scatter"``
    fills up with uniformly drawn nodes. Unmatched patch nodes become new
    nodes. Returns the union graph and the planted node set.
    """
    b = _Builder.from_graph(base)
    nodes = _plant(b, patch, n_common, rng, mode)
    return b.to_graph(), nodes


def _staple(b: _Builder, patch: Graph, rng) -> list[int]:
    if b.num_nodes == 0 or patch.num_nodes == 0:
        raise InputError("staple needs two non-empty graphs")
    anchor = int(rng.integers(0, b.num_nodes))
    p = int(rng.integers(0, patch.num_nodes))
    off = b.add_nodes(patch.num_nodes)
    for u, v in patch.edges.tolist():
        b.add_edge(u + off, v + off)
    b.add_edge(anchor, p + off)
    return list(range(off, off + patch.num_nodes))


def staple(base: Graph, patch: Graph, rng: np.random.Generator) -> tuple[Graph, list[int]]:
    """Disjoint union plus one bridge edge between a random base and a random patch node."""
    b = _Builder.from_graph(base)
    nodes = _staple(b, patch, rng)
    return b.to_graph(), nodes


def bfs_extract(g: Graph, start: int, max_depth: int, size_cap: int,
                rng: np.random.Generator) -> list[int]:
    """Nodes visited by a depth-limited BFS from ``start``, truncated at ``size_cap``.

    Neighbor visitation order is shuffled. The result may be smaller than
    ``size_cap``; callers resample the start in that case.
    """
    if max_depth < 1:
        raise InputError("max_depth must be >= 1")
    if not 0 <= start < g.num_nodes:
        raise InputError(f"unknown start node {start}")
    out = [start]
    depth = {start: 0}
    queue = deque([start])
    while queue and len(out) < size_cap:
        u = queue.popleft()
        if depth[u] == max_depth:
            continue
        nbrs = g.neighbors(u).copy()
        rng.shuffle(nbrs)
        for v in nbrs.tolist():
            if v not in depth:
                depth[v] = depth[u] + 1
                out.append(v)
                queue.append(v)
                if len(out) == size_cap:
                    break
    return sorted(out)


# ------------------------------------------------------------------ labels


def quantile_labels(values: np.ndarray, bins: int, rng: np.random.Generator) -> tuple[np.ndarray, list[float]]:
    """Equal-frequency binning; ties broken randomly so class sizes differ by <= 1."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    order = np.lexsort((rng.random(n), values))
    labels = np.empty(n, dtype=np.int64)
    bounds = [round(i * n / bins) for i in range(bins + 1)]
    edges = []
    for b in range(bins):
        idx = order[bounds[b]:bounds[b + 1]]
        labels[idx] = b
        if b > 0:
            edges.append(float(values[order[bounds[b]]]))
    return labels, edges


def assign_splits(n: int, rng: np.random.Generator, fractions=(0.5, 0.25, 0.25)) -> list[str]:
    perm = rng.permutation(n)
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    tags = [""] * n
    for rank, i in enumerate(perm.tolist()):
        tags[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return tags


# ------------------------------------------------------------------- tasks


def _density_task(cfg: SynthConfig, rng):
    g = gen_barabasi_albert(cfg.base_nodes, cfg.ba_m, rng, triad_p=cfg.triad_p)
    subs = []
    while len(subs) < cfg.num_subgraphs:
        s = int(rng.integers(0, g.num_nodes))
        nodes = bfs_extract(g, s, cfg.bfs_depth, cfg.subgraph_size, rng)
        if len(nodes) == cfg.subgraph_size:
            subs.append(nodes)
    values = [gc.density(g, s) for s in subs]
    return g, subs, values, ["low", "medium", "high"]


def _cut_ratio_task(cfg: SynthConfig, rng):
    b = _Builder.from_graph(gen_barabasi_albert(cfg.base_nodes, cfg.ba_m, rng, triad_p=cfg.triad_p))
    k = complete_graph(cfg.subgraph_size)
    subs = [_plant(b, k, cfg.subgraph_size, rng, "scatter") for _ in range(cfg.num_subgraphs)]
    g = b.to_graph()
    values = [gc.cut_ratio(g, s) for s in subs]
    return g, subs, values, ["low", "medium", "high"]


def _coreness_task(cfg: SynthConfig, rng):
    b = _Builder.from_graph(gen_duplication_divergence(cfg.base_nodes, cfg.retain_p, rng))
    subs = []
    for _ in range(cfg.num_subgraphs):
        patch = gen_duplication_divergence(cfg.subgraph_size, cfg.retain_p, rng)
        subs.append(_plant(b, patch, 2, rng, "local"))
    g = b.to_graph()
    core = gc.core_numbers(g)
    values = [float(core[s].mean()) for s in subs]
    return g, subs, values, ["low", "medium", "high"]


def _component_task(cfg: SynthConfig, rng):
    b = _Builder.from_graph(gen_barabasi_albert(cfg.base_nodes, cfg.ba_m, rng))
    n_multi = cfg.num_subgraphs // 2
    counts = [1] * (cfg.num_subgraphs - n_multi) + rng.integers(2, cfg.max_components + 1, size=n_multi).tolist()
    counts = [counts[i] for i in rng.permutation(len(counts)).tolist()]
    subs = []
    for c in counts:
        nodes = []
        for _ in range(c):
            piece = gen_barabasi_albert(cfg.subgraph_size, 1, rng)
            nodes.extend(_staple(b, piece, rng))
        subs.append(sorted(nodes))
    g = b.to_graph()
    values = [float(len(gc.connected_components(g, s))) for s in subs]
    return g, subs, values, ["single", "multiple"]


def complete_graph(n: int) -> Graph:
    return Graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


def make_dataset(cfg: SynthConfig) -> Dataset:
    """Build one synthetic benchmark; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, TASKS.index(cfg.task)])
    builder = {
        "density": _density_task,
        "cut_ratio": _cut_ratio_task,
        "coreness": _coreness_task,
        "component": _component_task,
    }[cfg.task]
    g, subs, values, names = builder(cfg, rng)
    if cfg.task == "component":
        labels = np.array([0 if v == 1 else 1 for v in values])
        bin_edges = [1.5]
    else:
        labels, bin_edges = quantile_labels(np.array(values), cfg.bin_count, rng)
        if cfg.bin_count == 2:
            names = ["low", "high"]
    splits = assign_splits(len(subs), rng)
    records = [SubgraphRecord(s, [int(y)], t) for s, y, t in zip(subs, labels.tolist(), splits)]
    meta = {
        "task": cfg.task,
        "seed": cfg.seed,
        "label_names": names,
        "bin_edges": bin_edges,
        "config": asdict(cfg),
        "multilabel": False,
    }
    return Dataset(g, records, names, meta)


# --------------------------------------------------------------------- I/O


def save_dataset(ds: Dataset, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gc.write_edge_list(ds.graph, out / "edge_list.txt")
    with open(out / "subgraphs.tsv", "w") as fh:
        for rec in ds.subgraphs:
            nodes = "-".join(str(u) for u in rec.nodes)
            labels = "-".join(ds.label_names[y] for y in rec.labels)
            fh.write(f"{nodes}\t{labels}\t{rec.split}\n")
    meta = dict(ds.meta)
    meta["label_names"] = ds.label_names
    meta["num_nodes"] = ds.graph.num_nodes
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_dataset(in_dir: str | os.PathLike) -> Dataset:
    """Read a dataset directory; works for synthetic or externally built data.

    ``meta.json`` is optional. Without it label names are collected from the
    TSV in order of first appearance, and a subgraph with several labels marks
    the dataset multilabel.
    """
    d = Path(in_dir)
    meta: dict = {}
    if (d / "meta.json").exists():
        meta = json.loads((d / "meta.json").read_text())
    g = gc.read_edge_list(d / "edge_list.txt", num_nodes=meta.get("num_nodes"))
    rows = []
    for lineno, line in enumerate((d / "subgraphs.tsv").read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputError(f"subgraphs.tsv:{lineno}: expected 3 tab-separated fields")
        nodes = [int(x) for x in parts[0].split("-") if x]
        if not nodes:
            raise InputError(f"subgraphs.tsv:{lineno}: empty node list")
        if max(nodes) >= g.num_nodes:
            raise InputError(f"subgraphs.tsv:{lineno}: node id outside the graph")
        split = parts[2].strip()
        if split not in SPLITS:
            raise InputError(f"subgraphs.tsv:{lineno}: unknown split {split!r}")
        rows.append((sorted(set(nodes)), parts[1].split("-"), split))
    names = list(meta.get("label_names", []))
    for _, labs, _ in rows:
        for lab in labs:
            if lab not in names:
                names.append(lab)
    recs = [SubgraphRecord(n, [names.index(x) for x in labs], s) for n, labs, s in rows]
    meta.setdefault("multilabel", any(len(r.labels) > 1 for r in recs))
    return Dataset(g, recs, names, meta)
