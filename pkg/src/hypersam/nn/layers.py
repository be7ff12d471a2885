"""Dense layers, multi-head attention, and the spatial-temporal encoders.

Modules hold named parameter Tensors and can be checkpointed as flat
named-array dictionaries. Initialization is orthogonal-style with a
configurable gain so output heads can start near zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .tensor import Tensor


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
    """Orthogonal-style init: orthonormal rows/columns scaled by ``gain``."""
    a = rng.standard_normal((rows, cols))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == (rows, cols) else vt
    return gain * q


class Module:
    """Minimal parameter container with recursive named collection."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                named[path] = value
            elif isinstance(value, Module):
                named.update(value.parameters(prefix=f"{path}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        named.update(item.parameters(prefix=f"{path}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        named[f"{path}.{i}"] = item
        return named

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ShapeError(f"checkpoint missing parameters: {sorted(missing)[:4]}...")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"parameter {name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters().values())


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, gain: float = 1.0):
        self.weight = Tensor(orthogonal(rng, in_dim, out_dim, gain), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)


class MLP(Module):
    """Dense stack with tanh hidden activations and a linear output layer."""

    def __init__(self, rng, dims: list[int], out_gain: float = 1.0):
        if len(dims) < 2:
            raise ShapeError("MLP needs at least input and output dims")
        self.layers = [
            Linear(rng, dims[i], dims[i + 1], gain=out_gain if i == len(dims) - 2 else 1.0)
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x) -> Tensor:
        for layer in self.layers[:-1]:
            x = T.tanh(layer(x))
        return self.layers[-1](x)


class ResidualMLP(Module):
    """x + MLP(x) with a zero-initialized output layer.

    Starts as an exact identity map, which keeps the learnable diffusion
    operators equal to their analytic counterparts at initialization.
    """

    def __init__(self, rng, dim: int, hidden: int):
        self.hidden = Linear(rng, dim, hidden)
        self.out = Linear(rng, hidden, dim)
        self.out.weight.data[:] = 0.0

    def __call__(self, x) -> Tensor:
        return T.add(x, self.out(T.tanh(self.hidden(x))))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``heads`` parallel heads.

    Inputs are ``[..., tokens, model_dim]``; per head the scores are
    softmax(Q K^T / sqrt(head_dim)) V, heads are concatenated and passed
    through the output projection.
    """

    def __init__(self, rng, model_dim: int, heads: int):
        if model_dim % heads:
            raise ShapeError(f"model_dim {model_dim} not divisible by {heads} heads")
        self.model_dim = model_dim
        self.heads = heads
        self.head_dim = model_dim // heads
        self.query = Linear(rng, model_dim, model_dim)
        self.key = Linear(rng, model_dim, model_dim)
        self.value = Linear(rng, model_dim, model_dim)
        self.out = Linear(rng, model_dim, model_dim)

    def _split(self, x: Tensor) -> Tensor:
        # [..., T, d] -> [..., h, T, d/h]
        tokens = x.shape[-2]
        x = T.reshape(x, x.shape[:-1] + (self.heads, self.head_dim))
        return T.swapaxes(x, -2, -3)

    def __call__(self, queries, keys, values) -> Tensor:
        if queries.shape[-1] != self.model_dim:
            raise ShapeError(f"expected feature dim {self.model_dim}, got {queries.shape[-1]}")
        if keys.shape[-2] != values.shape[-2]:
            raise ShapeError("keys and values must have the same token count")
        q = self._split(self.query(queries))
        k = self._split(self.key(keys))
        v = self._split(self.value(values))
        scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(self.head_dim))
        attn = T.softmax(scores, axis=-1)
        mixed = T.matmul(attn, v)  # [..., h, Tq, d/h]
        mixed = T.swapaxes(mixed, -2, -3)
        mixed = T.reshape(mixed, mixed.shape[:-2] + (self.model_dim,))
        return self.out(mixed)


class EncoderLayer(Module):
    """Residual self-attention followed by a residual feed-forward block."""

    def __init__(self, rng, model_dim: int, heads: int, ff_dim: int | None = None):
        ff_dim = ff_dim or 2 * model_dim
        self.attention = MultiHeadAttention(rng, model_dim, heads)
        self.ff_in = Linear(rng, model_dim, ff_dim)
        self.ff_out = Linear(rng, ff_dim, model_dim)

    def __call__(self, x) -> Tensor:
        x = T.add(x, self.attention(x, x, x))
        return T.add(x, self.ff_out(T.tanh(self.ff_in(x))))


class Embedding(Module):
    """Learned per-slot vectors (kind tags, time positions)."""

    def __init__(self, rng, slots: int, dim: int):
        self.table = Tensor(0.1 * rng.standard_normal((slots, dim)), requires_grad=True)

    def __call__(self, index) -> Tensor:
        return T.take(self.table, index)
