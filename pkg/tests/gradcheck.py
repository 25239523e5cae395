"""Central finite-difference check against reverse-mode gradients."""

import numpy as np


def sample_coords(store, n, rng):
    names = store.names(trainable_only=True)
    sizes = np.array([store[k].data.size for k in names])
    picks = []
    for r in rng.choice(sizes.sum(), size=min(n, sizes.sum()), replace=False).tolist():
        i = int(np.searchsorted(np.cumsum(sizes), r, side="right"))
        picks.append((names[i], r - int(sizes[:i].sum())))
    return picks


def relative_errors(loss_fn, store, n=50, seed=0, h=1e-6, floor=1e-5):
    """Relative errors at ``n`` random coordinates; ``loss_fn()`` returns a scalar Tensor.

    Gradients smaller than ``floor`` are compared on an absolute scale of
    ``floor``, since central differences carry ~1e-10 rounding noise.
    """
    store.zero_grad()
    loss_fn().backward()
    analytic = {k: (store[k].grad.copy() if store[k].grad is not None else np.zeros_like(store[k].data))
                for k in store.names(trainable_only=True)}
    errs = []
    for name, flat in sample_coords(store, n, np.random.default_rng(seed)):
        p = store[name].data
        orig = p.flat[flat]
        p.flat[flat] = orig + h
        up = float(loss_fn().data)
        p.flat[flat] = orig - h
        down = float(loss_fn().data)
        p.flat[flat] = orig
        num = (up - down) / (2 * h)
        ana = float(analytic[name].flat[flat])
        errs.append(abs(num - ana) / max(abs(num), abs(ana), floor))
    return errs
