"""
Saliency adaption embedding: the saliency map is binarized, the adjusted search grid
is cut into w x w windows, and each window becomes one coarse token or, when the mask
marks it salient, four fine tokens over its 2 x 2 sub-patches.
"""

from __future__ import annotations

import enum
import logging

from typing import List, Tuple, Optional
from dataclasses import dataclass

import numpy as np

from ..nn import Linear, Module, Parameter, sinusoidal_2d, kaiming_uniform
from ..autodiff import Tensor, ShapeError, ops

log = logging.getLogger(__name__)

SPLIT = 2


class Level(enum.Enum):
    COARSE = "coarse"
    FINE = "fine"


class TilingError(Exception):
    def __init__(self, uncovered: int, overlapped: int):
        self.uncovered = uncovered
        self.overlapped = overlapped

        super().__init__(f"token footprints leave {uncovered} cells uncovered, {overlapped} overlapped")


@dataclass(frozen=True)
class TokenOrigin:
    window_row: int
    window_col: int
    level: Level
    # 0..3 row-major inside the window for fine tokens, 0 for coarse ones
    sub_index: int
    y0: int
    x0: int
    size: int

    @property
    def centre(self) -> Tuple[float, float]:
        offset = (self.size - 1) / 2

        return self.y0 + offset, self.x0 + offset

    def cells(self, grid: int) -> np.ndarray:
        ys, xs = np.meshgrid(
            np.arange(self.y0, self.y0 + self.size),
            np.arange(self.x0, self.x0 + self.size),
            indexing="ij",
        )

        return (ys * grid + xs).reshape(-1)


@dataclass
class BinaryMask:
    # exact {0, 1} forward values, (G, G)
    hard: np.ndarray
    # keep probabilities carrying the gradient, (G, G)
    soft: Tensor
    # straight-through combination: hard forward, soft backward
    values: Tensor
    tau: float


@dataclass
class WindowScores:
    sums: np.ndarray
    means: np.ndarray
    fine: np.ndarray

    @property
    def k_fine(self) -> int:
        return int(self.fine.sum())


@dataclass
class TokenSet:
    tokens: Tensor
    origins: List[TokenOrigin]
    window: int
    grid: int
    split: int = SPLIT

    @property
    def n_tokens(self) -> int:
        return len(self.origins)

    @property
    def k_fine(self) -> int:
        return sum(1 for o in self.origins if o.level is Level.FINE and o.sub_index == 0)

    def coverage(self) -> np.ndarray:
        return coverage(self.origins, self.grid)


def gumbel_binarize(
    m: Tensor, tau: float, rng: Optional[np.random.Generator] = None
) -> BinaryMask:
    """
    Two-way Gumbel-Softmax over logits (m, -m): keep probability
    sigmoid((2m + g_keep - g_drop) / tau), hard keep where the perturbed keep logit wins.
    Without a generator no noise is drawn, which is the deterministic inference path.
    """

    if tau <= 0:
        raise ValueError(f"Gumbel temperature must be > 0, got {tau}")

    if m.ndim == 3:
        if m.shape[0] != 1:
            raise ShapeError("gumbel_binarize", [m.shape], "saliency map must have one channel")
        m = m.reshape(m.shape[1], m.shape[2])

    if m.ndim != 2:
        raise ShapeError("gumbel_binarize", [m.shape], "expected (1, G, G) or (G, G)")

    logits = m * 2.0
    if rng is not None:
        noise = rng.gumbel(size=(2,) + m.shape)
        logits = logits + Tensor((noise[0] - noise[1]).astype(m.dtype))

    soft = ops.sigmoid(logits * (1.0 / tau))
    hard = (logits.data > 0).astype(m.dtype)

    return BinaryMask(hard=hard, soft=soft, values=ops.straight_through(soft, hard), tau=tau)


def partition_and_score(mask: np.ndarray, window: int, theta: float = 0.5) -> WindowScores:
    """Per-window sums of the hard mask; a window is FINE iff its mean occupancy >= theta."""

    mask = np.asarray(mask)
    grid = mask.shape[0]
    if mask.shape != (grid, grid) or grid % window:
        raise ShapeError("partition_and_score", [mask.shape, (window,)], "grid % window != 0")

    n = grid // window
    sums = mask.reshape(n, window, n, window).sum(axis=(1, 3))
    means = sums / (window * window)

    return WindowScores(sums=sums, means=means, fine=means >= theta)


def force_decisions(means: np.ndarray, k: int) -> np.ndarray:
    """Marks the k windows with the highest mean as FINE, ties broken row-major."""

    means = np.asarray(means)
    if not 0 <= k <= means.size:
        raise ValueError(f"k must be in [0, {means.size}], got {k}")

    order = np.argsort(-means.reshape(-1), kind="stable")

    fine = np.zeros(means.size, dtype=bool)
    fine[order[:k]] = True

    return fine.reshape(means.shape)


def force_density(windows_per_side: int, density: float) -> np.ndarray:
    """The first round(density * W_n) windows in row-major order are FINE."""

    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must be in [0, 1], got {density}")

    total = windows_per_side ** 2

    return force_decisions(np.zeros((windows_per_side, windows_per_side)), int(round(density * total)))


def plan_tokens(fine: np.ndarray, window: int) -> List[TokenOrigin]:
    """Token footprints, row-major by window then sub-index."""

    fine = np.asarray(fine, dtype=bool)
    if window % SPLIT:
        raise ShapeError("plan_tokens", [(window,)], f"window must be divisible by {SPLIT}")

    sub = window // SPLIT

    origins: List[TokenOrigin] = []
    for row in range(fine.shape[0]):
        for col in range(fine.shape[1]):
            y0, x0 = row * window, col * window

            if not fine[row, col]:
                origins.append(TokenOrigin(row, col, Level.COARSE, 0, y0, x0, window))
                continue

            for index in range(SPLIT * SPLIT):
                dy, dx = divmod(index, SPLIT)
                origins.append(
                    TokenOrigin(row, col, Level.FINE, index, y0 + dy * sub, x0 + dx * sub, sub)
                )

    return origins


def coverage(origins: List[TokenOrigin], grid: int) -> np.ndarray:
    counts = np.zeros(grid * grid, dtype=np.int64)
    for origin in origins:
        np.add.at(counts, origin.cells(grid), 1)

    return counts.reshape(grid, grid)


def occupancy_matrix(origins: List[TokenOrigin], grid: int, dtype: np.dtype) -> np.ndarray:  # type: ignore[type-arg]
    """(N_t, G^2) rows averaging each token's footprint."""

    matrix = np.zeros((len(origins), grid * grid), dtype=dtype)
    for i, origin in enumerate(origins):
        matrix[i, origin.cells(grid)] = 1.0 / (origin.size * origin.size)

    return matrix


class TokenEmbedding(Module):
    """
    Separate projections per level: coarse (w*w*C -> C) and fine ((w/2)*(w/2)*C -> C).
    Each token also gets its footprint's mask occupancy times `saliency_embedding`,
    the path along which gradient reaches the saliency map.
    """

    def __init__(self, channels: int, window: int, rng: np.random.Generator) -> None:
        if window % SPLIT:
            raise ShapeError("token_embedding", [(window,)], f"window must be divisible by {SPLIT}")

        self.channels = channels
        self.window = window

        sub = window // SPLIT
        self.coarse = Linear(window * window * channels, channels, rng)
        self.fine = Linear(sub * sub * channels, channels, rng)
        self.saliency_embedding = Parameter(kaiming_uniform(rng, (channels,), channels))

    def _project(self, cells: Tensor, origins: List[TokenOrigin], level: Level) -> Optional[Tensor]:
        chosen = [o for o in origins if o.level is level]
        if not chosen:
            return None

        grid = int(np.sqrt(cells.shape[0]))
        indices = np.concatenate([o.cells(grid) for o in chosen])
        patches = ops.index_select(cells, indices, axis=0)

        size = chosen[0].size
        flat = patches.reshape(len(chosen), size * size * self.channels)

        layer = self.coarse if level is Level.COARSE else self.fine

        return layer(flat, flop_kind="embedding")

    def forward(
        self,
        feat: Tensor,
        fine: np.ndarray,
        mask: Optional[Tensor] = None,
        positional: bool = True,
    ) -> TokenSet:
        c, grid, grid_w = feat.shape
        if c != self.channels or grid != grid_w or grid % self.window:
            raise ShapeError(
                "embed_tokens", [feat.shape, (self.channels, self.window)], "bad feature grid"
            )

        n = grid // self.window
        fine = np.asarray(fine, dtype=bool)
        if fine.shape != (n, n):
            raise ShapeError("embed_tokens", [fine.shape, (n, n)], "decisions must cover all windows")

        origins = plan_tokens(fine, self.window)

        # (G^2, C), row-major cells
        cells = feat.reshape(c, grid * grid).T

        parts = []
        part_origins: List[TokenOrigin] = []
        for level in (Level.COARSE, Level.FINE):
            projected = self._project(cells, origins, level)
            if projected is not None:
                parts.append(projected)
                part_origins += [o for o in origins if o.level is level]

        # back to row-major window order
        position = {o: i for i, o in enumerate(part_origins)}
        order = [position[o] for o in origins]
        tokens = ops.index_select(ops.concat(parts, axis=0), order, axis=0)

        if mask is not None:
            if mask.shape != (grid, grid):
                raise ShapeError("embed_tokens", [mask.shape, (grid, grid)], "mask grid mismatch")

            averaging = Tensor(occupancy_matrix(origins, grid, tokens.dtype))
            occupancy = ops.matmul(averaging, mask.reshape(grid * grid, 1), flop_kind="embedding")
            tokens = tokens + occupancy * self.saliency_embedding

        if positional:
            ys, xs = zip(*(o.centre for o in origins))
            tokens = tokens + Tensor(sinusoidal_2d(ys, xs, c).astype(tokens.dtype))

        return TokenSet(tokens=tokens, origins=origins, window=self.window, grid=grid)


def embed_tokens(
    feat: Tensor,
    decisions: np.ndarray,
    embedding: TokenEmbedding,
    mask: Optional[Tensor] = None,
    positional: bool = True,
) -> TokenSet:
    return embedding(feat, decisions, mask, positional)


def detokenize(tokens_out: Tensor, origins: List[TokenOrigin], grid: int) -> Tensor:
    """Broadcasts every token over its footprint, giving a (C, G, G) map."""

    if tokens_out.ndim != 2 or tokens_out.shape[0] != len(origins):
        raise ShapeError("detokenize", [tokens_out.shape, (len(origins),)], "one row per origin")

    owner = np.full(grid * grid, -1, dtype=np.int64)
    counts = np.zeros(grid * grid, dtype=np.int64)
    for i, origin in enumerate(origins):
        if min(origin.y0, origin.x0) < 0 or max(origin.y0, origin.x0) + origin.size > grid:
            raise ShapeError("detokenize", [(origin.y0, origin.x0, origin.size), (grid,)], "footprint outside grid")

        cells = origin.cells(grid)
        owner[cells] = i
        np.add.at(counts, cells, 1)

    if (counts != 1).any():
        raise TilingError(int((counts == 0).sum()), int((counts > 1).sum()))

    c = tokens_out.shape[1]
    cells_out = ops.index_select(tokens_out, owner, axis=0)

    return cells_out.T.reshape(c, grid, grid)
