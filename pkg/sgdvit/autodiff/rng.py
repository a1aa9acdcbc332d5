from __future__ import annotations

from typing import List, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split(seed: SeedLike, count: int) -> List[np.random.Generator]:
    """Independent child generators, stable for a given seed and count."""

    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)

    return [make_rng(child) for child in seed.spawn(count)]
