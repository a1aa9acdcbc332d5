from __future__ import annotations

import logging

from typing import Any, Dict, Optional
from dataclasses import dataclass

import numpy as np

from ..nn import Module, grid_encoding, resize_bilinear
from ..config import Variant, ModelConfig
from ..autodiff import Tensor, flops, make_rng
from ..autodiff.serialize import load_checkpoint, save_checkpoint
from .heads import HeadOutputs, TrackingHeads
from .backbone import (
    Backbone,
    AdjustSampler,
    adjust_sample,
    extract_features,
    check_window_alignment,
)
from .saliency import SaliencyMining, SaliencyArtifacts, mine_saliency, cross_correlate
from .embedding import (
    TokenSet,
    BinaryMask,
    TokenEmbedding,
    detokenize,
    embed_tokens,
    gumbel_binarize,
    partition_and_score,
)
from .transformer import SaliencyFilterTransformer, sft_decode, sft_encode

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sgdvit-checkpoint"


@dataclass
class TemplateFeatures:
    # backbone output used for correlation, (C, T, T)
    raw: Tensor
    # adjusted template grid as decoder keys/values, (T*T, C)
    tokens: Tensor

    def freeze(self) -> TemplateFeatures:
        for t in (self.raw, self.tokens):
            t.data.flags.writeable = False

        return self


@dataclass
class ForwardOutputs:
    heads: HeadOutputs
    tokens: Optional[TokenSet] = None
    mask: Optional[BinaryMask] = None
    saliency: Optional[SaliencyArtifacts] = None
    # saliency map resampled onto the G x G grid, (1, G, G)
    saliency_grid: Optional[Tensor] = None


class SGDViT(Module):
    """
    backbone -> correlate -> mine -> embed -> encoder/decoder -> detokenize -> heads.
    The variant decides which stages exist:

    - BASELINE: heads on the resampled similarity map.
    - SIT: standard encoder with FFN over similarity-map tokens, then the decoder.
    - SAT: saliency filtering transformer with uniform coarse tokens.
    - SAT_DYN: saliency filtering transformer with dynamic tokens.
    """

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        self.config = config
        self.variant = config.kind

        check_window_alignment(config.grid, config.window)

        rng = make_rng(seed)
        c = config.channels

        self.backbone = Backbone(
            c, rng, config.backbone_channels, config.template_size, config.search_size
        )
        self.adjust = AdjustSampler(c, rng)

        self.template_grid = self.backbone.output_sizes[config.template_size]
        self.search_grid = self.backbone.output_sizes[config.search_size]
        self.corr_grid = self.search_grid - self.template_grid + 1

        if self.variant in (Variant.SAT, Variant.SAT_DYN):
            self.mining = SaliencyMining(c, self.corr_grid, rng)
            self.embedding = TokenEmbedding(c, config.window, rng)

        if self.variant is not Variant.BASELINE:
            self.sft = SaliencyFilterTransformer(
                c,
                config.heads,
                rng,
                ffn_mult=config.ffn_mult,
                encoder_depth=config.encoder_depth,
                decoder_depth=config.decoder_depth,
                encoder_ffn=self.variant is Variant.SIT,
            )

        self.heads = TrackingHeads(c, rng, config.cls_bias)

        self.name_parameters()

    def resample_to_grid(self, corr_map: Tensor) -> Tensor:
        """
        Moves a map from the correlation grid onto the G x G grid that spans the search
        features. Correlation cell i sits at search feature position i + (T - 1) / 2;
        positions with no correlation value are zero.
        """

        grid = self.config.grid
        scale = (self.search_grid - 1) / (grid - 1)
        offset = -(self.template_grid - 1) / 2

        return resize_bilinear(corr_map, grid, scale=scale, offset=offset, fill="zeros")

    def template_features(self, crop: Tensor) -> TemplateFeatures:
        with flops.scope("backbone"):
            raw = extract_features(crop, self.backbone)
            adjusted = adjust_sample(raw, self.adjust)

        c, t, _ = adjusted.shape
        tokens = adjusted.reshape(c, t * t).T
        if self.config.positional_encoding:
            tokens = tokens + Tensor(grid_encoding(t, c).astype(tokens.dtype))

        return TemplateFeatures(raw=raw, tokens=tokens)

    def forward(
        self,
        template: TemplateFeatures,
        search_crop: Tensor,
        rng: Optional[np.random.Generator] = None,
        decisions: Optional[np.ndarray] = None,
    ) -> ForwardOutputs:
        """
        `rng` draws the Gumbel noise of the dynamic mask; None binarizes without noise.
        `decisions` overrides the per-window FINE/COARSE choice.
        """

        cfg = self.config
        grid = cfg.grid

        with flops.scope("backbone"):
            search_feat = extract_features(search_crop, self.backbone)

        with flops.scope("correlation"):
            s1 = cross_correlate(search_feat, template.raw)

        if self.variant is Variant.BASELINE:
            with flops.scope("heads"):
                return ForwardOutputs(heads=self.heads(self.resample_to_grid(s1)))

        if self.variant is Variant.SIT:
            with flops.scope("embedding"):
                s1_grid = self.resample_to_grid(s1)
                tokens = s1_grid.reshape(cfg.channels, grid * grid).T
                if cfg.positional_encoding:
                    tokens = tokens + Tensor(grid_encoding(grid, cfg.channels).astype(tokens.dtype))

            with flops.scope("encoder"):
                m4 = sft_encode(tokens, tokens, self.sft)
            with flops.scope("decoder"):
                out = sft_decode(m4, template.tokens, self.sft)

            with flops.scope("heads"):
                heads = self.heads(out.T.reshape(cfg.channels, grid, grid))

            return ForwardOutputs(heads=heads)

        with flops.scope("mining"):
            saliency = mine_saliency(s1, self.mining)
            fl_grid = self.resample_to_grid(saliency.fl)
            m_grid = self.resample_to_grid(saliency.m)

        with flops.scope("embedding"):
            search_adj = adjust_sample(search_feat, self.adjust, grid)

            dynamic = self.variant is Variant.SAT_DYN
            mask = gumbel_binarize(m_grid, cfg.tau, rng if dynamic else None)

            if decisions is None:
                if dynamic:
                    decisions = partition_and_score(mask.hard, cfg.window, cfg.theta).fine
                else:
                    n = cfg.windows_per_side
                    decisions = np.zeros((n, n), dtype=bool)

            token_set = embed_tokens(
                search_adj, decisions, self.embedding, mask.values, cfg.positional_encoding
            )
            m2 = fl_grid.reshape(cfg.channels, grid * grid).T

        with flops.scope("encoder"):
            m4 = sft_encode(token_set.tokens, m2, self.sft)
        with flops.scope("decoder"):
            out = sft_decode(m4, template.tokens, self.sft)

        with flops.scope("heads"):
            heads = self.heads(detokenize(out, token_set.origins, grid))

        return ForwardOutputs(
            heads=heads, tokens=token_set, mask=mask, saliency=saliency, saliency_grid=m_grid
        )

    def freeze(self) -> SGDViT:
        """Read-only weights that threads may share for inference."""

        for p in self.parameters():
            p.requires_grad = False
            p.data.flags.writeable = False

        return self

    def save(self, path: str, extra: Optional[Dict[str, Any]] = None) -> None:
        metadata = {"format": CHECKPOINT_FORMAT, "model": self.config.to_dict()}
        metadata.update(extra or {})

        save_checkpoint(path, self.state_dict(), metadata)

    @classmethod
    def load(cls, path: str) -> SGDViT:
        tensors, metadata = load_checkpoint(path)

        model = cls(ModelConfig.from_dict(metadata.get("model") or {}))
        model.load_state_dict(tensors)

        log.debug(f"loaded {len(tensors)} tensors from {path}, variant {model.variant.value}")

        return model
