from __future__ import annotations

import math

from typing import List, Optional

import numpy as np

from ..autodiff import Tensor, ShapeError, ops
from .module import Module, Parameter, kaiming_uniform


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, scale_dim: Optional[int] = None
) -> Tensor:
    """
    Softmax(q @ k^T / sqrt(c)) @ v for 2-D token matrices. `c` defaults to the query
    width; multi-head callers pass the per-head width.
    """

    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("attention", [q.shape, k.shape, v.shape], "expected token matrices")

    if q.shape[1] != k.shape[1]:
        raise ShapeError("attention", [q.shape, k.shape], "query and key widths differ")

    if k.shape[0] != v.shape[0]:
        raise ShapeError("attention", [k.shape, v.shape], "key and value token counts differ")

    c = scale_dim or q.shape[1]

    logits = ops.matmul(q, k.T, flop_kind="attention_qk") * (1.0 / math.sqrt(c))
    weights = ops.softmax(logits, axis=-1)

    return ops.matmul(weights, v, flop_kind="attention_av")


class MultiHeadAttention(Module):
    """
    Per head j: a_j = attention(q W1_j, k W2_j, v W3_j), then Cat(a_1..a_N) Wc. No
    biases.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        if heads < 1 or dim % heads:
            raise ShapeError("multi_head_attention", [(dim,), (heads,)], "dim % heads != 0")

        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads

        def projection() -> Parameter:
            return Parameter(kaiming_uniform(rng, (dim, self.head_dim), dim))

        self.w1: List[Parameter] = [projection() for _ in range(heads)]
        self.w2: List[Parameter] = [projection() for _ in range(heads)]
        self.w3: List[Parameter] = [projection() for _ in range(heads)]
        self.wc = Parameter(kaiming_uniform(rng, (dim, dim), dim))

    def forward(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        for t in (q, k, v):
            if t.ndim != 2 or t.shape[1] != self.dim:
                raise ShapeError(
                    "multi_head_attention", [t.shape, (self.dim,)], "token width != model dim"
                )

        heads = [
            scaled_dot_attention(
                ops.matmul(q, w1, flop_kind="projection"),
                ops.matmul(k, w2, flop_kind="projection"),
                ops.matmul(v, w3, flop_kind="projection"),
                scale_dim=self.head_dim,
            )
            for w1, w2, w3 in zip(self.w1, self.w2, self.w3)
        ]

        return ops.matmul(ops.concat(heads, axis=1), self.wc, flop_kind="projection")


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, layer: MultiHeadAttention) -> Tensor:
    return layer(q, k, v)
