"""Adam with bias correction and optional global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from ..errors import InputError, RunError
from .params import ParamStore


class Adam:
    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 clip: float = 0.0):
        if lr <= 0:
            raise InputError("learning rate must be positive")
        if clip < 0:
            raise InputError("gradient clip must be >= 0 (0 disables clipping)")
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, store: ParamStore) -> None:
        """Update every parameter that holds a gradient; others are left alone."""
        live = [(k, p) for k, p in store.items() if p.grad is not None]
        for k, p in live:
            if not np.isfinite(p.grad).all():
                raise RunError(f"non-finite gradient in parameter {k}", stage="train")
        scale = 1.0
        if self.clip > 0 and live:
            norm = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in live))
            if norm > self.clip:
                scale = self.clip / norm
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in live:
            g = p.grad * scale
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(p.data)
                self.v[k] = np.zeros_like(p.data)
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(store: ParamStore, optimizer: Adam) -> None:
    optimizer.step(store)
