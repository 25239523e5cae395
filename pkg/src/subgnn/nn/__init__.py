"""Minimal differentiable-array engine, recurrent encoder and optimizer."""

from .lstm import add_bilstm, bi_recurrent_encode, bilstm_sum
from .optim import Adam
from .params import ParamStore, load_checkpoint, save_checkpoint
from .tensor import Tensor

__all__ = [
    "Adam",
    "ParamStore",
    "Tensor",
    "add_bilstm",
    "bi_recurrent_encode",
    "bilstm_sum",
    "load_checkpoint",
    "save_checkpoint",
]
