"""
Differentiable ops over numpy arrays. Each class registers itself under its `kind` and
is reachable through `tensor_op(kind, ...)` or the wrappers at the bottom of the file.
"""

from __future__ import annotations

from typing import Any, List, Tuple, Optional, Sequence

import numpy as np

from .tensor import Shape, Tensor, Function, ShapeError, as_tensor, tensor_op


def unbroadcast(grad: np.ndarray, shape: Shape) -> np.ndarray:
    """Sums out the dimensions numpy broadcasting added to reach grad.shape."""

    if grad.shape == shape:
        return grad

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


def _broadcast_check(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, [a.shape, b.shape], "shapes do not broadcast")


def _axes(axis: Any, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))

    if isinstance(axis, int):
        axis = (axis,)

    return tuple(a % ndim for a in axis)


class Add(Function):
    kind = "add"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        _broadcast_check(self.kind, a, b)
        self.shapes = (a.shape, b.shape)

        return a + b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    kind = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        _broadcast_check(self.kind, a, b)
        self.shapes = (a.shape, b.shape)

        return a - b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    kind = "mul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        _broadcast_check(self.kind, a, b)
        self.a, self.b = a, b

        return a * b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class Div(Function):
    kind = "div"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        _broadcast_check(self.kind, a, b)
        self.a, self.b = a, b

        return a / b

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (
            unbroadcast(grad / self.b, self.a.shape),
            unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape),
        )


class Neg(Function):
    kind = "neg"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        return -a

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (-grad,)


class Pow(Function):
    kind = "pow"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.a = a

        return a ** self.params["exponent"]

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        p = self.params["exponent"]

        return (grad * p * self.a ** (p - 1),)


class Exp(Function):
    kind = "exp"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.out = np.exp(a)

        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.out,)


class Log(Function):
    kind = "log"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.a = a

        return np.log(a)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad / self.a,)


class Relu(Function):
    kind = "relu"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.mask = a > 0

        return np.where(self.mask, a, 0).astype(a.dtype)

    def branches(self) -> Optional[np.ndarray]:
        return self.mask

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.mask,)


class Sigmoid(Function):
    kind = "sigmoid"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.out = _sigmoid(a)

        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * self.out * (1 - self.out),)


class Softplus(Function):
    kind = "softplus"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.a = a

        return np.logaddexp(0, a).astype(a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * _sigmoid(self.a),)


class Minimum(Function):
    kind = "minimum"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        _broadcast_check(self.kind, a, b)
        self.shapes = (a.shape, b.shape)
        self.take_a = a <= b

        return np.minimum(a, b)

    def branches(self) -> Optional[np.ndarray]:
        return self.take_a

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (
            unbroadcast(grad * self.take_a, self.shapes[0]),
            unbroadcast(grad * ~self.take_a, self.shapes[1]),
        )


class MatMul(Function):
    kind = "matmul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(self.kind, [a.shape, b.shape])

        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError(self.kind, [a.shape, b.shape], "batch dims do not broadcast")

        self.a, self.b = a, b

        return np.matmul(a, b)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)

        return unbroadcast(grad_a, self.a.shape), unbroadcast(grad_b, self.b.shape)

    def macs(self, a: np.ndarray, b: np.ndarray) -> int:  # type: ignore[override]
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])

        return int(np.prod(batch, dtype=np.int64)) * a.shape[-2] * a.shape[-1] * b.shape[-1]


class Reshape(Function):
    kind = "reshape"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.shape = a.shape
        try:
            return a.reshape(self.params["shape"])
        except ValueError:
            raise ShapeError(self.kind, [a.shape, self.params["shape"]])

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    kind = "transpose"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        axes = self.params.get("axes")
        if axes is None:
            axes = tuple(reversed(range(a.ndim)))

        if sorted(axes) != list(range(a.ndim)):
            raise ShapeError(self.kind, [a.shape, axes], "axes are not a permutation")

        self.axes = axes

        return np.ascontiguousarray(a.transpose(axes))

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.transpose(np.argsort(self.axes)),)


class Concat(Function):
    kind = "concat"

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        axis = self.params.get("axis", 0)
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            raise ShapeError(self.kind, [a.shape for a in arrays])

        self.axis = axis % out.ndim
        self.sizes = [a.shape[self.axis] for a in arrays]

        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        bounds = np.cumsum(self.sizes)[:-1]

        return np.split(grad, bounds, axis=self.axis)


class Slice(Function):
    kind = "slice"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.shape = a.shape
        self.dtype = a.dtype

        out = a[self.params["index"]]
        if out.size == 0:
            raise ShapeError(self.kind, [a.shape], f"empty slice {self.params['index']}")

        return np.ascontiguousarray(out)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[self.params["index"]] = grad.reshape(full[self.params["index"]].shape)

        return (full,)


class IndexSelect(Function):
    """Gathers entries along an axis; repeated indices accumulate on the way back."""

    kind = "index_select"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.shape = a.shape
        self.axis = self.params.get("axis", 0) % a.ndim
        self.indices = np.asarray(self.params["indices"], dtype=np.int64)

        if self.indices.size == 0:
            raise ShapeError(self.kind, [a.shape], "no indices selected")

        return np.take(a, self.indices, axis=self.axis)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        full = np.zeros(self.shape, dtype=grad.dtype)

        moved = np.moveaxis(full, self.axis, 0)
        np.add.at(moved, self.indices, np.moveaxis(grad, self.axis, 0))

        return (full,)


class Softmax(Function):
    kind = "softmax"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.axis = self.params.get("axis", -1)

        shifted = a - a.max(axis=self.axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=self.axis, keepdims=True)

        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        dot = (grad * self.out).sum(axis=self.axis, keepdims=True)

        return (self.out * (grad - dot),)


class Sum(Function):
    kind = "sum"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.shape = a.shape
        self.axes = _axes(self.params.get("axis"), a.ndim)
        self.keepdims = self.params.get("keepdims", False)

        return np.asarray(a.sum(axis=self.axes, keepdims=self.keepdims))

    def _expand(self, grad: np.ndarray) -> np.ndarray:
        if not self.keepdims:
            if len(self.axes) == len(self.shape):
                grad = grad.reshape((1,) * len(self.shape))
            else:
                grad = np.expand_dims(grad, self.axes)

        return np.broadcast_to(grad, self.shape)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.array(self._expand(grad)),)


class Mean(Sum):
    kind = "mean"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        out = super().forward(a)
        self.count = int(np.prod([a.shape[i] for i in self.axes]))

        return out / self.count

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.array(self._expand(grad)) / self.count,)


class BroadcastTo(Function):
    kind = "broadcast"

    def forward(self, a: np.ndarray) -> np.ndarray:  # type: ignore[override]
        self.shape = a.shape
        try:
            return np.array(np.broadcast_to(a, self.params["shape"]))
        except ValueError:
            raise ShapeError(self.kind, [a.shape, self.params["shape"]])

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (unbroadcast(grad, self.shape),)


class StraightThrough(Function):
    """Forward returns the hard values, backward hands the gradient to the soft input."""

    kind = "straight_through"

    def forward(self, soft: np.ndarray) -> np.ndarray:  # type: ignore[override]
        hard = np.asarray(self.params["hard"], dtype=soft.dtype)
        if hard.shape != soft.shape:
            raise ShapeError(self.kind, [soft.shape, hard.shape])

        return hard.copy()

    def branches(self) -> Optional[np.ndarray]:
        return np.asarray(self.params["hard"])

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad,)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1 / (1 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1 + e)

    return out


def add(a: Tensor, b: Any) -> Tensor:
    return tensor_op("add", a, as_tensor(b, a.dtype))


def mul(a: Tensor, b: Any) -> Tensor:
    return tensor_op("mul", a, as_tensor(b, a.dtype))


def matmul(a: Tensor, b: Tensor, flop_kind: str = "matmul") -> Tensor:
    return tensor_op("matmul", a, b, flop_kind=flop_kind)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return tensor_op("reshape", a, shape=tuple(shape))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return tensor_op("transpose", a, axes=tuple(axes) if axes is not None else None)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if len(tensors) == 1:
        return tensors[0]

    return tensor_op("concat", *tensors, axis=axis)


def index_select(a: Tensor, indices: Any, axis: int = 0) -> Tensor:
    return tensor_op("index_select", a, indices=indices, axis=axis)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    return tensor_op("softmax", a, axis=axis)


def exp(a: Tensor) -> Tensor:
    return tensor_op("exp", a)


def log(a: Tensor) -> Tensor:
    return tensor_op("log", a)


def relu(a: Tensor) -> Tensor:
    return tensor_op("relu", a)


def sigmoid(a: Tensor) -> Tensor:
    return tensor_op("sigmoid", a)


def softplus(a: Tensor) -> Tensor:
    return tensor_op("softplus", a)


def minimum(a: Tensor, b: Any) -> Tensor:
    return tensor_op("minimum", a, as_tensor(b, a.dtype))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    return tensor_op("broadcast", a, shape=tuple(shape))


def straight_through(soft: Tensor, hard: np.ndarray) -> Tensor:
    return tensor_op("straight_through", soft, hard=hard)


def sum_all(tensors: List[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = total + t

    return total
