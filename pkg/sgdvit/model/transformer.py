from __future__ import annotations

import logging

from typing import List, Optional

import numpy as np

from ..nn import LayerNorm, Module, FeedForward, MultiHeadAttention
from ..autodiff import Tensor, ShapeError

log = logging.getLogger(__name__)


class EncoderLayer(Module):
    """Norm(mAtt(q, kv, kv) + q). No feed-forward stage unless `ffn_dim` is given."""

    def __init__(
        self, dim: int, heads: int, rng: np.random.Generator, ffn_dim: Optional[int] = None
    ) -> None:
        self.mha = MultiHeadAttention(dim, heads, rng)
        self.norm = LayerNorm(dim)

        if ffn_dim is not None:
            self.ffn = FeedForward(dim, ffn_dim, rng)
            self.ffn_norm = LayerNorm(dim)

    def forward(self, q: Tensor, kv: Tensor) -> Tensor:
        x = self.norm(self.mha(q, kv, kv) + q)

        if hasattr(self, "ffn"):
            x = self.ffn_norm(self.ffn(x) + x)

        return x


class DecoderLayer(Module):
    """M5 = Norm(mAtt(q, kv, kv) + q); out = Norm(FFN(M5) + M5)."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, rng: np.random.Generator) -> None:
        self.mha = MultiHeadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim, rng)
        self.norm2 = LayerNorm(dim)

    def forward(self, q: Tensor, kv: Tensor) -> Tensor:
        m5 = self.norm1(self.mha(q, kv, kv) + q)

        return self.norm2(self.ffn(m5) + m5)


class SaliencyFilterTransformer(Module):
    """
    Encoder: dynamic tokens attend to the saliency features. Decoder: encoder output
    attends to the template tokens. With `encoder_ffn` the encoder becomes a standard
    one, which is what the similarity-map variant uses.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        ffn_mult: int = 4,
        encoder_depth: int = 1,
        decoder_depth: int = 1,
        encoder_ffn: bool = False,
    ) -> None:
        self.dim = dim

        ffn_dim = ffn_mult * dim
        self.encoder: List[EncoderLayer] = [
            EncoderLayer(dim, heads, rng, ffn_dim if encoder_ffn else None)
            for _ in range(encoder_depth)
        ]
        self.decoder: List[DecoderLayer] = [
            DecoderLayer(dim, heads, ffn_dim, rng) for _ in range(decoder_depth)
        ]

    def _check(self, *tokens: Tensor) -> None:
        for t in tokens:
            if t.ndim != 2 or t.shape[1] != self.dim:
                raise ShapeError("sft", [t.shape, (self.dim,)], "token width != model dim")

    def encode(self, m3: Tensor, m2: Tensor) -> Tensor:
        self._check(m3, m2)

        x = m3
        for layer in self.encoder:
            x = layer(x, m2)

        return x

    def decode(self, m4: Tensor, m1: Tensor) -> Tensor:
        self._check(m4, m1)

        x = m4
        for layer in self.decoder:
            x = layer(x, m1)

        return x

    def forward(self, m3: Tensor, m2: Tensor, m1: Tensor) -> Tensor:
        return self.decode(self.encode(m3, m2), m1)


def sft_encode(m3: Tensor, m2: Tensor, sft: SaliencyFilterTransformer) -> Tensor:
    return sft.encode(m3, m2)


def sft_decode(m4: Tensor, m1: Tensor, sft: SaliencyFilterTransformer) -> Tensor:
    return sft.decode(m4, m1)
