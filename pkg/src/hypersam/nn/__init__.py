from . import tensor
from .layers import (
    MLP,
    Embedding,
    EncoderLayer,
    Linear,
    Module,
    MultiHeadAttention,
    ResidualMLP,
    orthogonal,
)
from .tensor import Tensor, no_grad

__all__ = [
    "tensor",
    "Tensor",
    "no_grad",
    "Module",
    "Linear",
    "MLP",
    "ResidualMLP",
    "MultiHeadAttention",
    "EncoderLayer",
    "Embedding",
    "orthogonal",
]
