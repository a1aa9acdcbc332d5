from __future__ import annotations

import abc
import logging
import threading
import contextlib

from types import TracebackType
from typing import (
    Any,
    Dict,
    List,
    Type,
    Tuple,
    Union,
    Iterator,
    Optional,
    Sequence,
)

import numpy as np

from . import flops

log = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
Shape = Tuple[int, ...]

_local = threading.local()


class ShapeError(Exception):
    def __init__(self, op: str, shapes: Sequence[Sequence[int]], msg: str = ""):
        self.op = op
        self.shapes = tuple(tuple(int(d) for d in s) for s in shapes)

        super().__init__(msg)

    def __str__(self) -> str:
        shapes = " vs ".join(str(s) for s in self.shapes)
        if self.args[0]:
            return f"{self.op}: {shapes}: {self.args[0]}"

        return f"{self.op}: {shapes}"


class GradientError(Exception):
    pass


def default_dtype() -> np.dtype:  # type: ignore[type-arg]
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Switches the dtype of newly created tensors, float64 in verification mode."""

    previous = default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


@contextlib.contextmanager
def record_branches() -> Iterator[List[np.ndarray]]:
    """
    Collects the branch taken by every piecewise op run inside the block (ReLU masks,
    min and max-pool picks, straight-through hard values). Two evaluations with equal
    records ran on the same smooth piece of the function.
    """

    previous = getattr(_local, "branches", None)
    record: List[np.ndarray] = []
    _local.branches = record
    try:
        yield record
    finally:
        _local.branches = previous


def same_branches(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


class Tensor:
    # makes numpy defer to Tensor.__radd__ and friends
    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Any = None,
        name: Optional[str] = None,
    ) -> None:
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) else default_dtype()

        arr = np.ascontiguousarray(data, dtype=dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1)

        if 0 in arr.shape:
            raise ShapeError("tensor", [arr.shape], "every dimension must be >= 1")

        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

        # position of the producing node on _tape, None for leaves
        self.tape_id: Optional[int] = None
        self._tape: Optional[GradTape] = None

    @property
    def shape(self) -> Shape:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:  # type: ignore[type-arg]
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.tape_id is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", [self.shape], "tensor is not scalar-shaped")

        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self._tape is None:
            raise GradientError("backward() called on a tensor that is not on a tape")

        self._tape.backward(self)

    def __repr__(self) -> str:
        grad = ", requires_grad" if self.requires_grad else ""

        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    # operator sugar, the ops live in ops.py

    def __add__(self, other: Any) -> Tensor:
        return tensor_op("add", self, as_tensor(other, self.dtype))

    def __radd__(self, other: Any) -> Tensor:
        return tensor_op("add", as_tensor(other, self.dtype), self)

    def __sub__(self, other: Any) -> Tensor:
        return tensor_op("sub", self, as_tensor(other, self.dtype))

    def __rsub__(self, other: Any) -> Tensor:
        return tensor_op("sub", as_tensor(other, self.dtype), self)

    def __mul__(self, other: Any) -> Tensor:
        return tensor_op("mul", self, as_tensor(other, self.dtype))

    def __rmul__(self, other: Any) -> Tensor:
        return tensor_op("mul", as_tensor(other, self.dtype), self)

    def __truediv__(self, other: Any) -> Tensor:
        return tensor_op("div", self, as_tensor(other, self.dtype))

    def __rtruediv__(self, other: Any) -> Tensor:
        return tensor_op("div", as_tensor(other, self.dtype), self)

    def __neg__(self) -> Tensor:
        return tensor_op("neg", self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return tensor_op("matmul", self, other)

    def __pow__(self, exponent: float) -> Tensor:
        return tensor_op("pow", self, exponent=float(exponent))

    def __getitem__(self, index: Any) -> Tensor:
        return tensor_op("slice", self, index=index)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        return tensor_op("reshape", self, shape=tuple(shape))

    def transpose(self, *axes: int) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])

        return tensor_op("transpose", self, axes=tuple(axes) or None)

    @property
    def T(self) -> Tensor:
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]

        return self.transpose(*axes)

    def sum(self, axis: Any = None, keepdims: bool = False) -> Tensor:
        return tensor_op("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> Tensor:
        return tensor_op("mean", self, axis=axis, keepdims=keepdims)


def as_tensor(value: Any, dtype: Any = None) -> Tensor:
    if isinstance(value, Tensor):
        return value

    return Tensor(np.asarray(value, dtype=dtype or default_dtype()))


class _Node:
    __slots__ = ("fn", "inputs", "output")

    def __init__(self, fn: Function, inputs: Sequence[Tensor], output: Tensor) -> None:
        self.fn = fn
        self.inputs = tuple(inputs)
        self.output = output


def active_tape() -> Optional[GradTape]:
    stack: List[GradTape] = getattr(_local, "tapes", [])

    return stack[-1] if stack else None


class GradTape:
    """
    Records ops whose inputs require gradient while active. The graph is rebuilt on
    every forward pass, which is what lets token counts change per frame.
    """

    def __init__(self) -> None:
        self.nodes: List[_Node] = []
        self.mode = default_dtype()

    def __enter__(self) -> GradTape:
        if not hasattr(_local, "tapes"):
            _local.tapes = []

        _local.tapes.append(self)

        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        _local.tapes.remove(self)

    def record(self, fn: Function, inputs: Sequence[Tensor], output: Tensor) -> None:
        output.tape_id = len(self.nodes)
        output._tape = self

        self.nodes.append(_Node(fn, inputs, output))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise GradientError(f"loss must be scalar-shaped, got {loss.shape}")

        if loss._tape is not self:
            raise GradientError("loss was not produced on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

        for node in reversed(self.nodes[: loss.tape_id + 1]):  # type: ignore[operator]
            grad = grads.pop(id(node.output), None)
            if grad is None:
                continue

            input_grads = node.fn.backward(grad)

            for tensor, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue

                if tensor._tape is self and tensor.tape_id is not None:
                    key = id(tensor)
                    if key in grads:
                        grads[key] = grads[key] + input_grad
                    else:
                        grads[key] = input_grad

                    continue

                # leaf, or a tensor recorded on another tape: treated as a leaf
                if tensor.grad is None:
                    tensor.grad = np.array(input_grad, dtype=tensor.dtype)
                else:
                    tensor.grad = tensor.grad + input_grad


class OpKind(type):
    """Registers every Function subclass that declares a `kind`."""

    registry: Dict[str, Type[Function]] = {}

    def __init__(cls, name: str, bases: Tuple[type, ...], dct: Dict[str, Any]):
        super().__init__(name, bases, dct)

        kind = dct.get("kind")
        if kind is not None:
            OpKind.registry[kind] = cls  # type: ignore[assignment]


class Function(metaclass=OpKind):
    kind: str

    def __init__(self, **params: Any) -> None:
        self.params = params

    @property
    def flop_kind(self) -> str:
        return str(self.params.get("flop_kind", self.kind))

    @abc.abstractmethod
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError

    def macs(self, *arrays: np.ndarray) -> int:
        return 0

    def branches(self) -> Optional[np.ndarray]:
        """Branch selection of the last forward, None for smooth ops."""

        return None

    @classmethod
    def apply(cls, *inputs: Tensor, **params: Any) -> Tensor:
        fn = cls(**params)

        arrays = [t.data for t in inputs]
        out_data = fn.forward(*arrays)

        recording: Optional[List[np.ndarray]] = getattr(_local, "branches", None)
        if recording is not None:
            taken = fn.branches()
            if taken is not None:
                recording.append(taken)

        if flops.counting():
            macs = fn.macs(*arrays)
            if macs:
                flops.record(fn.flop_kind, macs)

        tape = active_tape()
        requires_grad = tape is not None and any(t.requires_grad for t in inputs)

        out = Tensor(out_data, requires_grad=requires_grad, dtype=out_data.dtype)
        if requires_grad:
            tape.record(fn, inputs, out)  # type: ignore[union-attr]

        return out


def tensor_op(kind: str, *inputs: Tensor, **params: Any) -> Tensor:
    try:
        fn_class = OpKind.registry[kind]
    except KeyError:
        raise ValueError(f"Unknown op kind: {kind}")

    return fn_class.apply(*inputs, **params)
