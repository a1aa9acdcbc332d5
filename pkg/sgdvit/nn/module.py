from __future__ import annotations

import math
import logging

from typing import Any, Dict, List, Tuple, Iterator, Mapping, Sequence

import numpy as np

from ..autodiff import Tensor, ShapeError, default_dtype

log = logging.getLogger(__name__)


class Parameter(Tensor):
    def __init__(self, data: np.ndarray, name: str = "") -> None:
        super().__init__(np.asarray(data, dtype=default_dtype()), requires_grad=True, name=name)


def kaiming_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)

    return rng.uniform(-bound, bound, size=tuple(shape))


class Module:
    """
    Parameters and sub-modules are discovered from instance attributes, lists of them
    included, giving hierarchical names such as `encoder.0.mha.w1.2`.
    """

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue

            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def name_parameters(self) -> None:
        for name, param in self.named_parameters():
            param.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())

        if strict:
            missing = own.keys() - state.keys()
            unexpected = state.keys() - own.keys()
            if missing or unexpected:
                raise KeyError(
                    f"state mismatch, missing: {sorted(missing)}, unexpected: {sorted(unexpected)}"
                )

        for name, array in state.items():
            if name not in own:
                continue

            param = own[name]
            if param.data.shape != np.shape(array):
                raise ShapeError("load_state_dict", [param.shape, np.shape(array)], name)

            param.data = np.array(array, dtype=param.dtype)

    def astype(self, dtype: Any) -> Module:
        for p in self.parameters():
            p.data = p.data.astype(dtype)

        return self

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _walk(value: Any, name: str) -> Iterator[Tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")
