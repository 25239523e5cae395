"""Named trainable parameters, initializers and the binary checkpoint format."""

from __future__ import annotations

import json
import os
import struct
from collections.abc import Iterator

import numpy as np

from ..errors import InputError
from .tensor import Tensor

_MAGIC = b"SGCK"
_VERSION = 1
_DTYPES = {b"d": "<f8", b"f": "<f4"}


def glorot(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)); vectors use fan_out = 1."""
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Ordered map of named tensors; initialization draws from one seeded stream.

    Entries added with ``trainable=False`` are buffers (running statistics):
    they are saved and restored with the rest but never receive gradients.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.rng = np.random.default_rng([self.seed, 201])
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...], init: str | np.ndarray = "glorot",
            trainable: bool = True) -> Tensor:
        if name in self._params:
            raise InputError(f"duplicate parameter name {name!r}")
        if isinstance(init, np.ndarray):
            if init.shape != tuple(shape):
                raise InputError(f"{name}: init shape {init.shape} != {tuple(shape)}")
            data = init.astype(np.float64)
        elif init == "glorot":
            data = glorot(tuple(shape), self.rng)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            raise InputError(f"unknown initializer {init!r}")
        t = Tensor(data, requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, trainable_only: bool = False) -> list[str]:
        return [k for k, t in self._params.items() if t.requires_grad or not trainable_only]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values() if t.requires_grad)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = sorted(set(self._params) ^ set(state))
            raise InputError(f"parameter names differ: {missing}")
        for k, v in state.items():
            if v.shape != self._params[k].shape:
                raise InputError(f"{k}: shape {v.shape} != {self._params[k].shape}")
            self._params[k].data = v.astype(np.float64, copy=True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamStore) or self.names() != other.names():
            return False
        return all(np.array_equal(self[k].data, other[k].data) for k in self._params)


def save_checkpoint(store: ParamStore, path: str | os.PathLike, meta: dict | None = None,
                    dtype: str = "d") -> None:
    """Write ``SGCK`` | version | count | meta json | tensors (name, dtype tag, shape, data)."""
    tag = dtype.encode()
    if tag not in _DTYPES:
        raise InputError(f"dtype tag must be one of {sorted(k.decode() for k in _DTYPES)}")
    buffers = [k for k, t in store.items() if not t.requires_grad]
    meta_blob = json.dumps({"seed": store.seed, "buffers": buffers, **(meta or {})}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, len(store), len(meta_blob)))
        fh.write(meta_blob)
        for name, t in store.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw + tag)
            fh.write(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(t.data.astype(_DTYPES[tag]).tobytes(order="C"))


def load_checkpoint(path: str | os.PathLike) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise InputError(f"{path}: not a checkpoint (bad magic)")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise InputError(f"{path}: truncated at byte {pos}")
        out = blob[pos:pos + n]
        pos += n
        return out

    version, count, meta_len = struct.unpack("<III", take(12))
    if version != _VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(take(meta_len))
    store = ParamStore(meta.get("seed", 0))
    buffers = set(meta.get("buffers", []))
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        tag = take(1)
        if tag not in _DTYPES:
            raise InputError(f"{path}: unknown dtype tag {tag!r} for {name}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        itemsize = np.dtype(_DTYPES[tag]).itemsize
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(itemsize * n), dtype=_DTYPES[tag]).reshape(shape)
        store.add(name, tuple(shape), data.astype(np.float64), trainable=name not in buffers)
    if pos != len(blob):
        raise InputError(f"{path}: {len(blob) - pos} trailing bytes")
    return store, meta
