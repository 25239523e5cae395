"""Bidirectional LSTM encoder that sums hidden states over time and direction."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..errors import InputError
from . import tensor as T
from .params import ParamStore
from .tensor import Tensor


def add_lstm(store: ParamStore, prefix: str, d_in: int, d_h: int) -> None:
    """Register one direction's weights; gate order is input, forget, output, cell."""
    store.add(f"{prefix}.W_x", (d_in, 4 * d_h))
    store.add(f"{prefix}.W_h", (d_h, 4 * d_h))
    b = np.zeros(4 * d_h)
    b[d_h:2 * d_h] = 1.0
    store.add(f"{prefix}.b", (4 * d_h,), b)


def add_bilstm(store: ParamStore, prefix: str, d_in: int, d_h: int) -> None:
    add_lstm(store, f"{prefix}.fwd", d_in, d_h)
    add_lstm(store, f"{prefix}.bwd", d_in, d_h)


def _run(X, mask: np.ndarray, store: ParamStore, prefix: str, reverse: bool) -> Tensor:
    W_x, W_h, b = store[f"{prefix}.W_x"], store[f"{prefix}.W_h"], store[f"{prefix}.b"]
    B, L = mask.shape
    d_h = W_h.shape[0]
    # constant inputs are sliced in numpy; only a differentiable X pays for getitem
    xw = T.matmul(X, W_x) if X.requires_grad else None
    h = Tensor(np.zeros((B, d_h)))
    c = Tensor(np.zeros((B, d_h)))
    total = None
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        m = mask[:, t:t + 1]
        x_t = T.getitem(xw, (slice(None), t)) if xw is not None else T.matmul(X.data[:, t], W_x)
        a = T.add(T.add(x_t, T.matmul(h, W_h)), b)
        i = T.sigmoid(a[:, :d_h])
        f = T.sigmoid(a[:, d_h:2 * d_h])
        o = T.sigmoid(a[:, 2 * d_h:3 * d_h])
        g = T.tanh(a[:, 3 * d_h:])
        c_new = f * c + i * g
        h_new = o * T.tanh(c_new)
        if m.all():
            c, h = c_new, h_new
        else:
            c = c_new * m + c * (1.0 - m)
            h = h_new * m + h * (1.0 - m)
        contrib = h_new * m
        total = contrib if total is None else total + contrib
    return total


def bilstm_sum(X, mask, store: ParamStore, prefix: str) -> Tensor:
    """Encode a padded batch ``X`` of shape ``(B, L, d)``.

    ``mask[b, t]`` is 1 for real steps; each sequence occupies a prefix of its
    row. Returns ``(B, d_h)``: the sum of forward and backward hidden states
    over the real steps of each sequence.
    """
    X = T.as_tensor(X)
    mask = np.asarray(mask, dtype=np.float64)
    if X.ndim != 3 or mask.shape != X.shape[:2]:
        raise InputError(f"bilstm_sum: X {X.shape} and mask {mask.shape} disagree")
    if X.shape[1] == 0:
        raise InputError("bilstm_sum: sequences must have at least one step")
    if (mask.sum(axis=1) == 0).any():
        raise InputError("bilstm_sum: empty sequence in batch")
    return T.add(_run(X, mask, store, f"{prefix}.fwd", False), _run(X, mask, store, f"{prefix}.bwd", True))


def bi_recurrent_encode(sequence: Sequence, store: ParamStore, prefix: str) -> Tensor:
    """Single-sequence form of :func:`bilstm_sum`; returns a ``(d_h,)`` vector."""
    seq = T.as_tensor(sequence)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise InputError("bi_recurrent_encode needs a non-empty (length, d) sequence")
    X = T.reshape(seq, (1,) + seq.shape)
    out = bilstm_sum(X, np.ones((1, seq.shape[0])), store, prefix)
    return T.reshape(out, (out.shape[1],))
