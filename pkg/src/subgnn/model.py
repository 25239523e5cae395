"""Subgraph neural network: anchor-patch message passing over three channels.

Each subgraph component receives messages from sampled anchor patches in six
subchannels (position, neighborhood and structure; internal and border).
Position and structure produce one output coordinate per anchor patch, the
neighborhood channel keeps a hidden state. Per-layer outputs are concatenated
with the component's initial embedding and summed over components.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from . import graph as gc
from .anchors import AnchorPatch, AnchorPools
from .errors import InputError, RunError
from .graph import Graph
from .nn import tensor as T
from .nn.lstm import add_bilstm, bilstm_sum
from .nn.params import ParamStore
from .nn.tensor import Tensor
from .similarity import CACHE_SUBCHANNELS, SimilarityCache

CHANNELS = ("P", "N", "S")
OUTPUT_SUBCHANNELS = ("P_I", "P_B", "N_I", "N_B", "S_I", "S_B")
_POOL_OF = {"P_I": "P_I", "P_B": "P_B", "N_I": "N_I", "N_B": "N_B", "S_I": "S", "S_B": "S"}


@dataclass
class ModelConfig:
    channels: tuple[str, ...] = CHANNELS
    n_anchors: dict[str, int] = field(default_factory=lambda: {"P_I": 25, "P_B": 50, "N_I": 10, "N_B": 25, "S": 45})
    layers: int = 1
    hidden: int = 32
    activation: str = "leaky_relu"
    init_agg: str = "sum"
    projection: str = "vector"
    anchor_mode: str = "fixed"
    classifier_hidden: tuple[int, int] = (64, 64)
    dropout: float = 0.4
    feature_norm: str = "batch"

    def __post_init__(self):
        self.channels = tuple(c.upper() for c in self.channels)
        if not self.channels or any(c not in CHANNELS for c in self.channels):
            raise InputError(f"channels must be a non-empty subset of {CHANNELS}, got {self.channels}")
        self.channels = tuple(c for c in CHANNELS if c in self.channels)
        if set(self.n_anchors) != {"P_I", "P_B", "N_I", "N_B", "S"}:
            raise InputError("n_anchors needs counts for P_I, P_B, N_I, N_B and S")
        if min(self.n_anchors.values()) < 1:
            raise InputError("anchor counts must be >= 1")
        if self.layers < 1 or self.hidden < 1:
            raise InputError("layers and hidden must be >= 1")
        if self.activation not in T.ACTIVATIONS:
            raise InputError(f"activation must be one of {sorted(T.ACTIVATIONS)}")
        if self.init_agg not in ("sum", "max"):
            raise InputError("init_agg must be 'sum' or 'max'")
        if self.projection not in ("vector", "matrix"):
            raise InputError("projection must be 'vector' or 'matrix'")
        if self.anchor_mode not in ("epoch", "fixed"):
            raise InputError("anchor_mode must be 'epoch' or 'fixed'")
        if self.feature_norm not in ("batch", "none"):
            raise InputError("feature_norm must be 'batch' or 'none'")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError("dropout must lie in [0, 1)")
        self.classifier_hidden = tuple(self.classifier_hidden)

    def count(self, subchannel: str) -> int:
        return self.n_anchors[_POOL_OF[subchannel]]

    def enabled(self, subchannel: str) -> bool:
        return subchannel[0] in self.channels

    def subchannel_dim(self, subchannel: str) -> int:
        return self.hidden if subchannel[0] == "N" else self.count(subchannel)

    def output_dim(self, embed_dim: int) -> int:
        per_layer = sum(self.subchannel_dim(sc) for sc in OUTPUT_SUBCHANNELS if self.enabled(sc))
        return embed_dim + self.layers * per_layer

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------- components


@dataclass
class ComponentIndex:
    """Global component ids: ``components[c]`` is a sorted node list owned by subgraph ``owner[c]``."""

    components: list[list[int]]
    owner: list[int]
    by_subgraph: list[list[int]]

    @classmethod
    def build(cls, graph: Graph, subgraphs: Sequence[Sequence[int]]) -> "ComponentIndex":
        comps, owner, by_sub = [], [], []
        for s, nodes in enumerate(subgraphs):
            if len(nodes) == 0:
                raise InputError(f"subgraph {s} has no nodes")
            ids = []
            for comp in gc.connected_components(graph, nodes):
                ids.append(len(comps))
                comps.append(sorted(comp))
                owner.append(s)
            by_sub.append(ids)
        return cls(comps, owner, by_sub)

    def nested(self) -> list[list[list[int]]]:
        return [[self.components[c] for c in ids] for ids in self.by_subgraph]


# ------------------------------------------------------------ single ops


def encode_anchor(patch: AnchorPatch, embeddings: np.ndarray, walks: Sequence[Sequence[int]] | None = None,
                  store: ParamStore | None = None, prefix: str | None = None):
    """Anchor representation: the node embedding, or summed bi-LSTM walk encodings for structure patches.

    Walks are encoded in a canonical (sorted) order so the sum is bit-exact
    under any permutation of ``walks``. Sentinels and walk-less structure
    patches give a zero vector.
    """
    if patch.subchannel != "S":
        if patch.is_sentinel:
            return np.zeros(embeddings.shape[1])
        return embeddings[patch.nodes[0]].copy()
    d_h = store[f"{prefix}.fwd.W_h"].shape[0]
    if not walks:
        return Tensor(np.zeros(d_h))
    enc = encode_walk_batch([list(w) for w in walks], embeddings, store, prefix)
    return T.sum(enc, axis=0)


def encode_walk_batch(walks: list[list[int]], embeddings: np.ndarray, store: ParamStore, prefix: str) -> Tensor:
    walks = sorted(walks)
    lmax = max(len(w) for w in walks)
    X = np.zeros((len(walks), lmax, embeddings.shape[1]))
    mask = np.zeros((len(walks), lmax))
    for i, w in enumerate(walks):
        X[i, :len(w)] = embeddings[w]
        mask[i, :len(w)] = 1.0
    return bilstm_sum(X, mask, store, prefix)


def message(cache: SimilarityCache, component: int, patch: AnchorPatch, subchannel: str, representation):
    """Similarity-weighted anchor representation."""
    gamma = cache.lookup(component, patch.pool_index, subchannel)
    return T.mul(T.as_tensor(representation), gamma)


def _canonical_rows(M: np.ndarray) -> np.ndarray:
    if M.shape[0] <= 1:
        return M
    return M[np.lexsort(M.T[::-1])]


def layer_update(h_prev, messages: Sequence, W, activation: str = "relu") -> tuple[Tensor, Tensor]:
    """``g = sum(messages)`` (zero when empty), ``h = act([g; h_prev] @ W)``.

    Constant messages are summed in a canonical row order so ``g`` is bit-exact
    under permutation.
    """
    h_prev = T.as_tensor(h_prev)
    W = T.as_tensor(W)
    d_g = W.shape[0] - h_prev.shape[-1]
    if d_g < 0:
        raise InputError(f"layer_update: W {W.shape} too small for h_prev {h_prev.shape}")
    msgs = [T.as_tensor(m) for m in messages]
    if any(m.shape != (d_g,) for m in msgs):
        raise InputError(f"layer_update: messages must have shape ({d_g},), got {[m.shape for m in msgs]}")
    if not msgs:
        g = Tensor(np.zeros(d_g))
    elif not any(m.requires_grad for m in msgs):
        g = Tensor(_canonical_rows(np.stack([m.data for m in msgs])).sum(axis=0))
    else:
        g = T.sum(T.stack(msgs), axis=0)
    h = T.ACTIVATIONS[activation](T.matmul(T.concat([g, h_prev], axis=0), W))
    return g, h


def property_output(messages, q, activation: str = "relu") -> Tensor:
    """One coordinate per anchor: ``z[i] = act(q . M[i])``; ``q`` may also be a full matrix."""
    M = T.as_tensor(messages) if not isinstance(messages, (list, tuple)) else T.stack(messages)
    q = T.as_tensor(q)
    if q.ndim == 1:
        pre = T.matmul(M, q)
    else:
        pre = T.matmul(T.reshape(M, (M.shape[0] * M.shape[1],)), q)
    return T.ACTIVATIONS[activation](pre)


def add_classifier(store: ParamStore, d_in: int, hidden: tuple[int, int], d_out: int, prefix: str = "clf",
                   feature_norm: str = "none") -> None:
    """Register the head; ``feature_norm="batch"`` adds running-statistic buffers for input standardization."""
    if feature_norm == "batch":
        store.add(f"{prefix}.norm.mean", (d_in,), "zeros", trainable=False)
        store.add(f"{prefix}.norm.var", (d_in,), np.ones(d_in), trainable=False)
    dims = [d_in, *hidden, d_out]
    for i in range(3):
        store.add(f"{prefix}.W{i + 1}", (dims[i], dims[i + 1]))
        store.add(f"{prefix}.b{i + 1}", (dims[i + 1],), "zeros")


def classify(z, store: ParamStore, dropout: float = 0.0, train: bool = False,
             rng: np.random.Generator | None = None, prefix: str = "clf") -> Tensor:
    """Optional input standardization, then three affine layers with relu and dropout between them."""
    x = T.as_tensor(z)
    if f"{prefix}.norm.mean" in store:
        x = T.batch_standardize(x, store[f"{prefix}.norm.mean"], store[f"{prefix}.norm.var"], train)
    for i in range(1, 4):
        x = T.add(T.matmul(x, store[f"{prefix}.W{i}"]), store[f"{prefix}.b{i}"])
        if i < 3:
            x = T.dropout(T.relu(x), dropout, train, rng)
    return x


def node_avg_baseline(nodes: Sequence[int], embeddings: np.ndarray) -> np.ndarray:
    if len(nodes) == 0:
        raise InputError("node_avg_baseline needs a non-empty subgraph")
    return embeddings[np.sort(np.asarray(nodes, dtype=np.int64))].mean(axis=0)


# ----------------------------------------------------------- anchor draws


class AnchorSchedule:
    """Which pool indices each layer uses.

    ``epoch`` draws a fresh sorted subset per (epoch, layer, subchannel);
    evaluation and ``fixed`` mode use one draw held for the whole run.
    """

    def __init__(self, config: ModelConfig, pool_size: int, seed: int):
        for sc in ("P_I", "P_B", "N_I", "N_B", "S"):
            if config.n_anchors[sc] > pool_size:
                raise InputError(f"n_anchors[{sc}]={config.n_anchors[sc]} exceeds pool size {pool_size}")
        self.config = config
        self.pool_size = pool_size
        self.seed = int(seed)
        self._fixed = self._draw(np.random.default_rng([self.seed, 302]))

    def _draw(self, rng: np.random.Generator) -> list[dict[str, np.ndarray]]:
        out = []
        for _ in range(self.config.layers):
            layer = {}
            for sc in OUTPUT_SUBCHANNELS:
                n = self.config.count(sc)
                layer[sc] = np.sort(rng.choice(self.pool_size, size=n, replace=False))
            out.append(layer)
        return out

    def for_epoch(self, epoch: int) -> list[dict[str, np.ndarray]]:
        if self.config.anchor_mode == "fixed":
            return self._fixed
        return self._draw(np.random.default_rng([self.seed, 301, int(epoch)]))

    def for_eval(self) -> list[dict[str, np.ndarray]]:
        return self._fixed


# ------------------------------------------------------------------ model


@dataclass
class SubgraphEmbedding:
    z: Tensor
    components: list[int]
    parts: dict[str, Tensor]


class SubGNN:
    """Batched forward pass over a fixed graph, embedding table, pool set and cache."""

    def __init__(self, config: ModelConfig, embeddings: np.ndarray, index: ComponentIndex, pools: AnchorPools,
                 cache: SimilarityCache, num_outputs: int, seed: int = 0):
        if cache.num_components != len(index.components):
            raise RunError(f"cache covers {cache.num_components} components, index has {len(index.components)}",
                           stage="precompute")
        if cache.pool_size != pools.pool_size:
            raise RunError("cache and pools disagree on pool size", stage="precompute")
        self.config = config
        self.E = np.asarray(embeddings, dtype=np.float64)
        self.d = self.E.shape[1]
        self.index = index
        self.pools = pools
        self.cache = cache
        self.gamma = cache.values.astype(np.float64)
        self.num_outputs = num_outputs
        self.store = ParamStore(seed)
        self._nodes = {
            "P_I": pools.node_matrix("P_I"),
            "P_B": pools.position_border_nodes(),
            "N_I": pools.node_matrix("N_I"),
            "N_B": pools.node_matrix("N_B"),
        }
        self._owner = np.asarray(index.owner, dtype=np.int64)
        self._min_node = np.array([c[0] for c in index.components], dtype=np.int64)
        self._z0 = np.stack([self._init_embedding(c) for c in index.components])
        self._walks = {"S_I": pools.structure_walks["internal"], "S_B": pools.structure_walks["border"]}
        self._build_params()
        self.schedule = AnchorSchedule(config, pools.pool_size, seed)

    def _init_embedding(self, nodes: list[int]) -> np.ndarray:
        rows = self.E[np.sort(np.asarray(nodes, dtype=np.int64))]
        return rows.sum(axis=0) if self.config.init_agg == "sum" else rows.max(axis=0)

    def _build_params(self) -> None:
        cfg, s = self.config, self.store
        d, dh = self.d, cfg.hidden
        for sc in ("S_I", "S_B"):
            add_bilstm(s, f"{sc}.lstm", d, dh)
        for l in range(cfg.layers):
            for sc in OUTPUT_SUBCHANNELS:
                if sc[0] == "N":
                    s.add(f"{sc}.W.{l}", ((d + d) if l == 0 else (d + dh), dh))
                    continue
                dim = d if sc[0] == "P" else dh
                n = cfg.count(sc)
                shape = (dim,) if cfg.projection == "vector" else (n * dim, n)
                s.add(f"{sc}.q.{l}", shape)
        add_classifier(s, cfg.output_dim(d), cfg.classifier_hidden, self.num_outputs, feature_norm=cfg.feature_norm)

    def channel_params(self, channel: str) -> list[str]:
        return [k for k in self.store.names() if k.startswith(channel + "_")]

    # -- forward -----------------------------------------------------------

    def canonical_components(self, comp_ids: Sequence[int]) -> list[int]:
        return sorted(set(int(c) for c in comp_ids), key=lambda c: (self._min_node[c], c))

    def _encode_structure(self, sc: str, needed: np.ndarray) -> tuple[dict[int, int], Tensor]:
        """Encode the needed structure patches; returns a pool-index -> row map and the ``(n, d_h)`` rows."""
        walks, seg = [], []
        order = []
        for j in needed.tolist():
            ws = sorted(list(w) for w in self._walks[sc][j])
            order.append((j, len(ws)))
            walks.extend(ws)
            seg.extend([len(order) - 1] * len(ws))
        dh = self.config.hidden
        if not walks:
            return {j: i for i, (j, _) in enumerate(order)}, Tensor(np.zeros((len(order), dh)))
        lmax = max(len(w) for w in walks)
        X = np.zeros((len(walks), lmax, self.d))
        mask = np.zeros((len(walks), lmax))
        for i, w in enumerate(walks):
            X[i, :len(w)] = self.E[w]
            mask[i, :len(w)] = 1.0
        enc = bilstm_sum(X, mask, self.store, f"{sc}.lstm")
        assign = np.zeros((len(order), len(walks)))
        assign[seg, np.arange(len(walks))] = 1.0
        return {j: i for i, (j, _) in enumerate(order)}, T.matmul(assign, enc)

    def _point_messages(self, sc: str, flat: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Anchor embeddings ``(C, n, d)`` and similarities ``(C, n)`` for single-node subchannels."""
        nodes = self._nodes[sc]
        if sc == "P_I":
            ids = nodes[self._owner[flat]][:, idx]
        elif sc == "P_B":
            ids = np.broadcast_to(nodes[idx], (len(flat), len(idx)))
        else:
            ids = nodes[flat][:, idx]
        gam = self.gamma[flat][:, idx, CACHE_SUBCHANNELS.index(sc)]
        valid = ids >= 0
        A = self.E[np.where(valid, ids, 0)] * valid[..., None]
        return A, gam

    def forward(self, batch: Sequence[Sequence[int]], anchors: list[Mapping[str, np.ndarray]]) -> SubgraphEmbedding:
        """Embed each subgraph in ``batch`` (a list of global component-id lists)."""
        cfg = self.config
        act = T.ACTIVATIONS[cfg.activation]
        if len(anchors) != cfg.layers:
            raise InputError(f"expected anchor draws for {cfg.layers} layers, got {len(anchors)}")
        comp_lists = [self.canonical_components(ids) for ids in batch]
        if any(len(c) == 0 for c in comp_lists):
            raise InputError("subgraph with zero components")
        flat = np.array([c for cl in comp_lists for c in cl], dtype=np.int64)
        z0 = self._z0[flat]
        parts: dict[str, Tensor] = {"z0": Tensor(z0)}
        h_prev = {"N_I": Tensor(z0), "N_B": Tensor(z0)}
        enc = {}
        if "S" in cfg.channels:
            for sc in ("S_I", "S_B"):
                needed = np.unique(np.concatenate([a[sc] for a in anchors]))
                enc[sc] = self._encode_structure(sc, needed)
        for l, draw in enumerate(anchors):
            for sc in OUTPUT_SUBCHANNELS:
                if not cfg.enabled(sc):
                    continue
                idx = np.asarray(draw[sc], dtype=np.int64)
                if sc[0] == "N":
                    # the message sum runs in pool order whatever order the draw lists
                    A, gam = self._point_messages(sc, flat, np.sort(idx))
                    g = (gam[..., None] * A).sum(axis=1)
                    h = act(T.matmul(T.concat([Tensor(g), h_prev[sc]], axis=1), self.store[f"{sc}.W.{l}"]))
                    h_prev[sc] = h
                    parts[f"{sc}.{l}"] = h
                    continue
                q = self.store[f"{sc}.q.{l}"]
                if sc[0] == "P":
                    A, gam = self._point_messages(sc, flat, idx)
                    if cfg.projection == "vector":
                        pre = T.mul(T.matmul(A, q), gam)
                    else:
                        M = (gam[..., None] * A).reshape(len(flat), -1)
                        pre = T.matmul(M, q)
                else:
                    rows, a_all = enc[sc]
                    a = T.getitem(a_all, np.array([rows[j] for j in idx.tolist()]))
                    gam = self.gamma[flat][:, idx, CACHE_SUBCHANNELS.index(sc)]
                    if cfg.projection == "vector":
                        pre = T.mul(T.reshape(T.matmul(a, q), (1, len(idx))), gam)
                    else:
                        M = T.mul(T.reshape(a, (1, len(idx), cfg.hidden)), gam[..., None])
                        pre = T.matmul(T.reshape(M, (len(flat), len(idx) * cfg.hidden)), q)
                parts[f"{sc}.{l}"] = act(pre)
        Zc = T.concat(list(parts.values()), axis=1)
        readout = np.zeros((len(comp_lists), len(flat)))
        pos = 0
        for b, cl in enumerate(comp_lists):
            readout[b, pos:pos + len(cl)] = 1.0
            pos += len(cl)
        return SubgraphEmbedding(T.matmul(readout, Zc), flat.tolist(), parts)

    def logits(self, z: Tensor, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return classify(z, self.store, self.config.dropout, train, rng)


class NodeAverage:
    """Mean of member-node embeddings fed to the same classifier head."""

    def __init__(self, config: ModelConfig, embeddings: np.ndarray, num_outputs: int, seed: int = 0):
        self.config = config
        self.E = np.asarray(embeddings, dtype=np.float64)
        self.store = ParamStore(seed)
        add_classifier(self.store, self.E.shape[1], config.classifier_hidden, num_outputs,
                       feature_norm=config.feature_norm)

    def features(self, subgraphs: Sequence[Sequence[int]]) -> Tensor:
        return Tensor(np.stack([node_avg_baseline(s, self.E) for s in subgraphs]))

    def logits(self, z: Tensor, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return classify(z, self.store, self.config.dropout, train, rng)
