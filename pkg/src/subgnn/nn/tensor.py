"""A small reverse-mode autodiff engine over numpy arrays.

Each op returns a new :class:`Tensor` holding its parents and a closure that
pushes the output gradient back to them. ``Tensor.backward`` walks the graph
in reverse topological order. Constants (``requires_grad=False``) do not
record history, so graphs built purely from constants cost nothing.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from scipy.special import expit

from ..errors import InputError

Array = np.ndarray


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable[[Array], None] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: Array | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise InputError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, Array] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in node._backward(g):
                if parent.requires_grad and pg is not None:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: Array, parents: Sequence[Tensor], backward) -> Tensor:
    live = tuple(p for p in parents if p.requires_grad)
    if not live:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise InputError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    out = a.data + b.data
    return _node(out, (a, b), lambda g: ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    out = a.data - b.data
    return _node(out, (a, b), lambda g: ((a, _unbroadcast(g, a.shape)), (b, -_unbroadcast(g, b.shape))))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    out = a.data * b.data
    return _node(out, (a, b), lambda g: ((a, _unbroadcast(g * b.data, a.shape)),
                                         (b, _unbroadcast(g * a.data, b.shape))))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: ((x, g * mask),))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _node(s, (x,), lambda g: ((x, g * s * (1.0 - s)),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _node(t, (x,), lambda g: ((x, g * (1.0 - t * t)),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope)
    return _node(x.data * scale, (x,), lambda g: ((x, g * scale),))


def identity(x: Tensor) -> Tensor:
    return as_tensor(x)


ACTIVATIONS = {"relu": relu, "leaky_relu": leaky_relu, "sigmoid": sigmoid, "tanh": tanh, "identity": identity}


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when ``rate == 0`` or ``train`` is false."""
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise InputError(f"dropout rate must lie in [0, 1), got {rate}")
    if rng is None:
        raise InputError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: ((x, g * keep),))


def batch_standardize(x, running_mean: Tensor, running_var: Tensor, train: bool,
                      momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-column standardization of a ``(B, d)`` batch, without a learned affine.

    Training mode uses the batch statistics (gradients flow through them) and
    updates the running buffers in place; evaluation mode uses the buffers.
    """
    x = as_tensor(x)
    if x.ndim != 2 or running_mean.shape != (x.shape[1],) or running_var.shape != (x.shape[1],):
        raise InputError(f"batch_standardize: x {x.shape} vs buffers {running_mean.shape}")
    if not train:
        s = np.sqrt(running_var.data + eps)
        mu = running_mean.data
        return _node((x.data - mu) / s, (x,), lambda g: ((x, g / s),))
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    s = np.sqrt(var + eps)
    y = (x.data - mu) / s
    n = x.shape[0]
    running_mean.data = (1.0 - momentum) * running_mean.data + momentum * mu
    unbiased = var * n / (n - 1) if n > 1 else var
    running_var.data = (1.0 - momentum) * running_var.data + momentum * unbiased

    def back(g):
        return ((x, (g - g.mean(axis=0) - y * (g * y).mean(axis=0)) / s),)

    return _node(y, (x,), back)


# ---------------------------------------------------------------- linear


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of rank >= 1 and ``b`` of rank 1 or 2."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim not in (1, 2) or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise InputError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def back(g):
        if b.ndim == 1:
            ga = g[..., None] * b.data
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1)
        else:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return (a, ga), (b, gb)

    return _node(out, (a, b), back)


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise InputError("concat of nothing")
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise InputError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def back(g):
        return tuple(zip(xs, np.split(g, sizes, axis=axis)))

    return _node(out, xs, back)


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise InputError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([x.data for x in xs], axis=axis)
    return _node(out, xs, lambda g: tuple((x, np.take(g, i, axis=axis)) for i, x in enumerate(xs)))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape).copy()),)

    return _node(out, (x,), back)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return _node(out, (x,), lambda g: ((x, g.reshape(x.shape)),))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]
    basic = _is_basic(idx)

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            # basic indexing never repeats an element
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return ((x, full),)

    return _node(out, (x,), back)


def embedding_lookup(table, ids) -> Tensor:
    """Rows of ``table`` at integer ``ids`` (any shape); gradients scatter-add."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise InputError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InputError(f"embedding ids outside [0, {table.shape[0]})")
    out = table.data[ids]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return ((table, full),)

    return _node(out, (table,), back)


# ----------------------------------------------------------------- losses


def _sigmoid(x: Array) -> Array:
    return expit(x)


def log_softmax(x: Array) -> Array:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(x: Array) -> Array:
    return np.exp(log_softmax(x))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise InputError(f"cross entropy: logits {logits.shape} vs labels {labels.shape}")
    lsm = log_softmax(logits.data)
    n = labels.shape[0]
    loss = -lsm[np.arange(n), labels].mean()

    def back(g):
        p = np.exp(lsm)
        p[np.arange(n), labels] -= 1.0
        return ((logits, g * p / n),)

    return _node(np.asarray(loss), (logits,), back)


def sigmoid_bce(logits, targets) -> Tensor:
    """Mean binary cross entropy of independent sigmoid outputs against 0/1 ``targets``."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise InputError(f"bce: logits {logits.shape} vs targets {t.shape}")
    x = logits.data
    # log(1 + exp(-|x|)) form is stable for large |x|
    loss = (np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))).mean()

    def back(g):
        return ((logits, g * (_sigmoid(x) - t) / x.size),)

    return _node(np.asarray(loss), (logits,), back)
