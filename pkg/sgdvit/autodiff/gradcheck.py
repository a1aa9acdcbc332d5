from __future__ import annotations

import logging

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, GradTape, GradientError, record_branches, same_branches

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
MIN_STEP = 1e-7


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def central_difference(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    flat: np.ndarray,
    i: int,
    h: float = DEFAULT_STEP,
    min_step: float = MIN_STEP,
) -> Optional[float]:
    """
    (f(x + h) - f(x - h)) / 2h for coordinate `i` of `flat`. The step shrinks tenfold
    while the two evaluations take different branches of a piecewise op; None when
    no step down to `min_step` stays on one piece.
    """

    original = flat[i]
    step = h

    try:
        while step >= min_step:
            flat[i] = original + step
            with record_branches() as plus_branches:
                plus = fn(*inputs).item()

            flat[i] = original - step
            with record_branches() as minus_branches:
                minus = fn(*inputs).item()

            if same_branches(plus_branches, minus_branches):
                return (plus - minus) / (2 * step)

            step /= 10
    finally:
        flat[i] = original

    return None


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = DEFAULT_STEP,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = 1e-3,
) -> float:
    """
    Compares tape gradients of the scalar fn(*inputs) against central differences.
    Returns the worst relative error over the checked coordinates. Run it under
    precision(np.float64).

    Coordinates sitting on a kink (a ReLU or max-pool switch within the smallest
    step) are skipped; with `samples` further coordinates are drawn until that many
    were checked per input.
    """

    for t in inputs:
        t.requires_grad = True
        t.grad = None

    with GradTape() as tape:
        out = fn(*inputs)

        if out.data.size != 1:
            raise GradientError(f"gradcheck needs a scalar output, got {out.shape}")

        tape.backward(out)

    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for n, t in enumerate(inputs):
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)

        flat = t.data.reshape(-1)
        if samples is None or samples >= flat.size:
            order = np.arange(flat.size)
            wanted = flat.size
        else:
            order = rng.permutation(flat.size)
            wanted = samples

        checked = skipped = 0
        for i in order:
            if checked == wanted:
                break

            numeric = central_difference(fn, inputs, flat, int(i), h)
            if numeric is None:
                skipped += 1
                continue

            checked += 1
            worst = max(worst, relative_error(float(analytic[i]), numeric, floor))

        if skipped:
            log.debug(f"input {n}: skipped {skipped} coordinates on a kink")

        if flat.size and not checked:
            raise GradientError(f"input {n}: every coordinate sits on a kink")

    return worst
