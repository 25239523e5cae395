"""Node embeddings pretrained by link prediction, and embedding file I/O.

The model is a free per-node table ``X`` passed through one neighbor-mean
mixing layer, ``Z = (1 - alpha) X + alpha * mean_{v in N(u)} X_v``. Edges are
scored by ``z_u . z_v`` under a logistic loss with uniformly sampled
non-edges as negatives. Gradients are derived by hand, since the whole model
is two sparse-dense products.
"""

from __future__ import annotations

import os
import struct
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import InputError
from .graph import Graph
from .metrics import binary_auroc
from .nn.optim import Adam
from .nn.params import ParamStore

_MAGIC = b"SGEM"


@dataclass
class EmbeddingTable:
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise InputError(f"embedding table must be 2-D, got shape {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise InputError("embedding table has non-finite values")

    @property
    def num_nodes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EmbeddingTable) and np.array_equal(self.vectors, other.vectors)


@dataclass
class PretrainConfig:
    dim: int = 32
    epochs: int = 200
    neg_ratio: int = 1
    lr: float = 0.01
    alpha: float = 0.5
    test_fraction: float = 0.1
    init_scale: float = 0.1
    weight_decay: float = 5e-5

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 0 or self.neg_ratio < 1:
            raise InputError("dim >= 1, epochs >= 0 and neg_ratio >= 1 required")
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError("alpha must lie in [0, 1]")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be >= 0")
        if not 0.0 <= self.test_fraction < 1.0:
            raise InputError("test_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def mean_adjacency(num_nodes: int, edges: np.ndarray) -> sp.csr_matrix:
    """Row-normalized symmetric adjacency; isolated rows stay zero."""
    u, v = edges[:, 0], edges[:, 1]
    A = sp.coo_matrix((np.ones(2 * len(u)), (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(num_nodes, num_nodes)).tocsr()
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.diags(inv) @ A


def sample_non_edges(graph: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform node pairs ``u != v`` that are not edges of ``graph``."""
    n = graph.num_nodes
    keys = np.sort(graph.edges[:, 0].astype(np.int64) * n + graph.edges[:, 1])
    out = np.empty((0, 2), dtype=np.int64)
    while len(out) < count:
        need = count - len(out)
        cand = rng.integers(0, n, size=(2 * need + 8, 2))
        cand = cand[cand[:, 0] != cand[:, 1]]
        lo, hi = cand.min(axis=1), cand.max(axis=1)
        k = lo * n + hi
        pos = np.searchsorted(keys, k)
        hit = (pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == k)
        out = np.concatenate([out, cand[~hit][:need]])
    return out


def split_edges(graph: Graph, test_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(graph.num_edges)
    n_test = int(round(test_fraction * graph.num_edges))
    return graph.edges[np.sort(perm[n_test:])], graph.edges[np.sort(perm[:n_test])]


def mix(X: np.ndarray, A: sp.csr_matrix, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * X + alpha * (A @ X)


def _loss_and_grad(X, A, alpha, pos, neg):
    Z = mix(X, A, alpha)
    G = np.zeros_like(Z)
    loss = 0.0
    for pairs, sign in ((pos, 1.0), (neg, -1.0)):
        zu, zv = Z[pairs[:, 0]], Z[pairs[:, 1]]
        s = np.einsum("ij,ij->i", zu, zv)
        # softplus(-sign * s), gradient -sign * sigmoid(-sign * s)
        loss += float(np.logaddexp(0.0, -sign * s).mean())
        coef = (-sign * expit(-sign * s) / len(pairs))[:, None]
        np.add.at(G, pairs[:, 0], coef * zv)
        np.add.at(G, pairs[:, 1], coef * zu)
    grad = (1.0 - alpha) * G + alpha * (A.T @ G)
    return loss, grad


def link_scores(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]])


def pretrain_link_prediction(graph: Graph, config: PretrainConfig | None = None,
                             seed: int = 0) -> tuple[EmbeddingTable, dict]:
    """Train embeddings; returns the table and a summary with held-out link AUROC.

    The final table mixes over the full graph; the held-out AUROC is scored
    with the training-edge adjacency, so test edges never leak into it.
    """
    config = config or PretrainConfig()
    if graph.num_edges < 1:
        raise InputError("pretraining needs at least one edge")
    rng = np.random.default_rng([int(seed), 401])
    train_e, test_e = split_edges(graph, config.test_fraction, rng)
    A_train = mean_adjacency(graph.num_nodes, train_e)
    store = ParamStore(seed)
    X = store.add("X", (graph.num_nodes, config.dim), rng.normal(0.0, config.init_scale, (graph.num_nodes, config.dim)))
    opt = Adam(lr=config.lr)
    losses = []
    for _ in range(config.epochs):
        neg = sample_non_edges(graph, config.neg_ratio * len(train_e), rng)
        loss, grad = _loss_and_grad(X.data, A_train, config.alpha, train_e, neg)
        losses.append(loss)
        X.grad = grad + config.weight_decay * X.data
        opt.step(store)
    info = {"config": config.to_dict(), "seed": int(seed), "num_train_edges": int(len(train_e)),
            "num_test_edges": int(len(test_e)), "final_loss": losses[-1] if losses else None}
    if len(test_e):
        Z = mix(X.data, A_train, config.alpha)
        neg = sample_non_edges(graph, len(test_e), rng)
        scores = np.concatenate([link_scores(Z, test_e), link_scores(Z, neg)])
        labels = np.concatenate([np.ones(len(test_e)), np.zeros(len(neg))])
        info["test_auroc"] = binary_auroc(scores, labels)
    table = EmbeddingTable(mix(X.data, mean_adjacency(graph.num_nodes, graph.edges), config.alpha))
    return table, info


# --------------------------------------------------------------------- I/O


def save_embeddings(table: EmbeddingTable, path: str | os.PathLike, binary: bool = False) -> None:
    if binary:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", table.num_nodes, table.dim))
            fh.write(table.vectors.astype("<f8").tobytes())
        return
    with open(path, "w") as fh:
        fh.write(f"{table.num_nodes} {table.dim}\n")
        for u, row in enumerate(table.vectors):
            fh.write(f"{u} " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path: str | os.PathLike, num_nodes: int | None = None, dim: int | None = None) -> EmbeddingTable:
    """Read text or ``SGEM`` binary embeddings; checks counts against the caller's graph."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob:
        raise InputError(f"{path}:1: empty embedding file (truncated at byte 0)")
    if len(blob) < 4 and _MAGIC.startswith(blob):
        raise InputError(f"{path}: truncated header at byte {len(blob)}")
    if blob[:4] == _MAGIC:
        if len(blob) < 12:
            raise InputError(f"{path}: truncated header")
        n, d = struct.unpack("<II", blob[4:12])
        need = 12 + 8 * n * d
        if len(blob) != need:
            raise InputError(f"{path}: expected {need} bytes, found {len(blob)} (truncated at byte {len(blob)})")
        vec = np.frombuffer(blob, dtype="<f8", offset=12).reshape(n, d).astype(np.float64)
    else:
        try:
            lines = blob.decode().splitlines()
        except UnicodeDecodeError:
            raise InputError(f"{path}: not a text or SGEM embedding file") from None
        try:
            n, d = (int(x) for x in lines[0].split())
        except ValueError:
            raise InputError(f"{path}:1: header must be 'num_nodes dim'") from None
        vec = np.full((n, d), np.nan)
        seen = np.zeros(n, dtype=bool)
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != d + 1:
                raise InputError(f"{path}:{lineno}: expected {d + 1} fields, found {len(parts)}")
            try:
                u = int(parts[0])
                vec[u] = [float(x) for x in parts[1:]]
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: malformed row") from None
            seen[u] = True
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise InputError(f"{path}:{len(lines) + 1}: truncated; no vector for node {missing}")
    if num_nodes is not None and n != num_nodes:
        raise InputError(f"{path}: {n} vectors for a graph with {num_nodes} nodes")
    if dim is not None and d != dim:
        raise InputError(f"{path}: dimension {d}, expected {dim}")
    return EmbeddingTable(vec)
