"""Micro-F1 and one-vs-rest AUROC."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError, InputError


def decisions(scores: np.ndarray, multilabel: bool, threshold: float = 0.5) -> np.ndarray:
    """Argmax class ids, or a 0/1 matrix of per-label probabilities above ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64)
    if multilabel:
        return (scores > threshold).astype(np.int64)
    return scores.argmax(axis=1)


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k), dtype=np.int64)
    out[np.arange(len(labels)), labels] = 1
    return out


def micro_f1(predictions, labels) -> float:
    """Micro-averaged F1 from pooled TP/FP/FN.

    1-D integer inputs are multiclass decisions; 2-D inputs are 0/1 label
    matrices. With no positive decisions or labels at all the score is 0.
    """
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise InputError(f"micro_f1: predictions {p.shape} vs labels {y.shape}")
    if p.ndim == 1:
        k = int(max(p.max(initial=0), y.max(initial=0))) + 1
        p, y = _one_hot(p.astype(np.int64), k), _one_hot(y.astype(np.int64), k)
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def binary_auroc(scores, labels) -> float:
    """Mann-Whitney form with midranks for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUROC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auroc(scores, labels, average: str = "macro") -> float:
    """One-vs-rest AUROC over label columns.

    ``labels`` holds class ids (multiclass) or a 0/1 matrix (multilabel).
    ``macro`` averages per-column AUROC, skipping single-class columns with a
    warning; ``micro`` pools all (instance, label) pairs.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim == 1:
        s = s[:, None]
        y = y.reshape(-1, 1)
    elif y.ndim == 1:
        y = _one_hot(y.astype(np.int64), s.shape[1])
    if s.shape != y.shape:
        raise InputError(f"auroc: scores {s.shape} vs labels {y.shape}")
    if average == "micro":
        return binary_auroc(s.ravel(), y.ravel())
    if average != "macro":
        raise InputError(f"unknown AUROC average {average!r}")
    vals = []
    for j in range(s.shape[1]):
        col = y[:, j]
        if col.min() == col.max():
            warnings.warn(f"AUROC: label column {j} has a single class; skipped", RuntimeWarning, stacklevel=2)
            continue
        vals.append(binary_auroc(s[:, j], col))
    if not vals:
        raise DomainError("AUROC undefined: every label column has a single class")
    return float(np.mean(vals))
