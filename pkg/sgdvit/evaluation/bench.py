from __future__ import annotations

import csv
import logging

from typing import List, Sequence
from dataclasses import astuple, dataclass

from ..model import SGDViT, force_density
from ..config import Variant, ModelConfig
from ..autodiff import Tensor, make_rng, flop_counter, default_dtype

log = logging.getLogger(__name__)

BENCH_COLUMNS = (
    "density",
    "k_fine",
    "n_tokens",
    "encoder_qk_macs",
    "encoder_macs",
    "decoder_macs",
    "total_macs",
)


@dataclass
class TokenBenchRow:
    density: float
    k_fine: int
    n_tokens: int
    encoder_qk_macs: int
    encoder_macs: int
    decoder_macs: int
    total_macs: int


def bench_tokens(
    config: ModelConfig, densities: Sequence[float], seed: int = 0
) -> List[TokenBenchRow]:
    """
    Counts multiply-accumulates of one search forward pass with the FINE share of
    windows forced to each density. Template features are computed once, outside
    the count.
    """

    if config.kind is not Variant.SAT_DYN:
        log.info(f"token benchmark needs dynamic tokens, using SAT_DYN instead of {config.variant}")
        config = config.replace(variant=Variant.SAT_DYN.value)

    model = SGDViT(config, seed=seed)

    rng = make_rng(seed)
    dtype = default_dtype()
    template_crop = Tensor(rng.normal(size=(3, config.template_size, config.template_size)).astype(dtype))
    search_crop = Tensor(rng.normal(size=(3, config.search_size, config.search_size)).astype(dtype))

    template = model.template_features(template_crop)

    rows = []
    for density in densities:
        decisions = force_density(config.windows_per_side, density)

        with flop_counter() as report:
            outputs = model(template, search_crop, decisions=decisions)

        assert outputs.tokens is not None

        encoder = report.child("encoder")
        row = TokenBenchRow(
            density=density,
            k_fine=outputs.tokens.k_fine,
            n_tokens=outputs.tokens.n_tokens,
            encoder_qk_macs=encoder.get("attention_qk"),
            encoder_macs=encoder.total,
            decoder_macs=report.child("decoder").total,
            total_macs=report.total,
        )
        rows.append(row)

        log.info(
            f"density {density:.2f}: {row.n_tokens} tokens ({row.k_fine} fine windows), "
            f"encoder {row.encoder_macs} macs, total {row.total_macs} macs"
        )

    return rows


def write_bench(path: str, rows: Sequence[TokenBenchRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_COLUMNS)

        for row in rows:
            writer.writerow(astuple(row))
