"""Differentiable operations.

Broadcasting is limited to the leading dimensions: two operands conform when
their shapes are equal or when one shape is a trailing suffix of the other
(a 0-d scalar is a suffix of every shape). The adjoint of such a broadcast
is a sum over the leading axes.
"""

from __future__ import annotations

from typing import Any, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit
from scipy.special import logsumexp as _logsumexp

from graphtee.core.exceptions import IndexRangeError, ShapeError
from graphtee.ndgrad.tensor import Function, Tensor

Shape = Tuple[int, ...]


def _as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _is_suffix(short: Shape, long: Shape) -> bool:
    return len(short) < len(long) and tuple(long[len(long) - len(short):]) == tuple(short)


def _conform(op: str, a: Shape, b: Shape) -> Shape:
    if a == b or _is_suffix(b, a):
        return a
    if _is_suffix(a, b):
        return b
    raise ShapeError(op, a, b)


def _unbroadcast(grad: np.ndarray, shape: Shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


def _index_array(index: Any, limit: int, what: str) -> np.ndarray:
    array = np.asarray(index)
    if array.ndim != 1:
        raise ShapeError(what, array.shape, ("n",))
    if array.size and not np.issubdtype(array.dtype, np.integer):
        raise IndexRangeError(f"{what}: indices must be integers, got {array.dtype}")
    array = array.astype(np.int64, copy=False)
    if array.size and (array.min() < 0 or array.max() >= limit):
        raise IndexRangeError(
            f"{what}: index out of range [0, {limit})",
            {"min": int(array.min()), "max": int(array.max()), "limit": limit},
        )
    return array


# Elementwise binary operations


class Add(Function):
    name = "add"

    def forward(self, a, b):
        _conform(self.name, a.shape, b.shape)
        self.cache["shapes"] = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        a_shape, b_shape = self.cache["shapes"]
        return _unbroadcast(grad, a_shape), _unbroadcast(grad, b_shape)


class Sub(Function):
    name = "subtract"

    def forward(self, a, b):
        _conform(self.name, a.shape, b.shape)
        self.cache["shapes"] = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        a_shape, b_shape = self.cache["shapes"]
        return _unbroadcast(grad, a_shape), _unbroadcast(-grad, b_shape)


class Mul(Function):
    name = "hadamard"

    def forward(self, a, b):
        _conform(self.name, a.shape, b.shape)
        self.cache["inputs"] = (a, b)
        return a * b

    def backward(self, grad):
        a, b = self.cache["inputs"]
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class Scale(Function):
    name = "scale"

    def forward(self, a):
        return a * self.params["factor"]

    def backward(self, grad):
        return (grad * self.params["factor"],)


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(self.name, a.shape, b.shape)
        self.cache["inputs"] = (a, b)
        return a @ b

    def backward(self, grad):
        a, b = self.cache["inputs"]
        return grad @ b.T, a.T @ grad


# Reductions and reshaping


class Sum(Function):
    name = "sum"

    def forward(self, a):
        self.cache["shape"] = a.shape
        return np.sum(a, axis=self.params["axis"])

    def backward(self, grad):
        shape, axis = self.cache["shape"], self.params["axis"]
        if axis is None:
            return (np.full(shape, float(grad)),)
        return (np.array(np.broadcast_to(np.expand_dims(grad, axis), shape)),)


class Mean(Function):
    name = "mean"

    def forward(self, a):
        axis = self.params["axis"]
        self.cache["shape"] = a.shape
        self.cache["count"] = a.size if axis is None else a.shape[axis]
        return np.mean(a, axis=axis)

    def backward(self, grad):
        shape, axis, count = self.cache["shape"], self.params["axis"], self.cache["count"]
        if axis is None:
            return (np.full(shape, float(grad) / count),)
        return (np.array(np.broadcast_to(np.expand_dims(grad, axis), shape)) / count,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays):
        first = arrays[0]
        for other in arrays[1:]:
            if other.ndim != first.ndim or other.shape[:-1] != first.shape[:-1]:
                raise ShapeError(self.name, first.shape, other.shape)
        self.cache["widths"] = [array.shape[-1] for array in arrays]
        return np.concatenate(arrays, axis=-1)

    def backward(self, grad):
        bounds = np.cumsum(self.cache["widths"])[:-1]
        return tuple(np.split(grad, bounds, axis=-1))


class Reshape(Function):
    name = "reshape"

    def forward(self, a):
        self.cache["shape"] = a.shape
        try:
            return a.reshape(self.params["shape"])
        except ValueError:
            raise ShapeError(self.name, a.shape, self.params["shape"]) from None

    def backward(self, grad):
        return (grad.reshape(self.cache["shape"]),)


class Transpose(Function):
    name = "transpose"

    def forward(self, a):
        if a.ndim != 2:
            raise ShapeError(self.name, a.shape, ("n", "m"))
        return a.T

    def backward(self, grad):
        return (grad.T,)


# Indexing


class Gather(Function):
    name = "gather"

    def forward(self, a):
        if a.ndim < 1:
            raise ShapeError(self.name, a.shape, ("n", "..."))
        index = _index_array(self.params["index"], a.shape[0], self.name)
        self.cache["index"] = index
        self.cache["shape"] = a.shape
        return a[index]

    def backward(self, grad):
        out = np.zeros(self.cache["shape"])
        np.add.at(out, self.cache["index"], grad)
        return (out,)


class SegmentSum(Function):
    name = "segment_sum"

    def forward(self, rows):
        n_segments = int(self.params["n_segments"])
        if rows.ndim < 1:
            raise ShapeError(self.name, rows.shape, ("n", "..."))
        segments = np.asarray(self.params["segments"])
        if segments.ndim != 1 or segments.shape[0] != rows.shape[0]:
            raise ShapeError(self.name, rows.shape, segments.shape)
        segments = _index_array(segments, n_segments, self.name)
        self.cache["segments"] = segments
        out = np.zeros((n_segments,) + rows.shape[1:])
        # np.add.at accumulates in index order, so the summation order is fixed
        np.add.at(out, segments, rows)
        return out

    def backward(self, grad):
        return (grad[self.cache["segments"]],)


# Elementwise unary operations


class Elu(Function):
    name = "elu"

    def forward(self, a):
        self.cache["a"] = a
        return np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))

    def backward(self, grad):
        a = self.cache["a"]
        return (grad * np.where(a > 0, 1.0, np.exp(np.minimum(a, 0.0))),)


class Sigmoid(Function):
    name = "sigmoid"

    def forward(self, a):
        out = expit(a)
        self.cache["out"] = out
        return out

    def backward(self, grad):
        out = self.cache["out"]
        return (grad * out * (1.0 - out),)


class Tanh(Function):
    name = "tanh"

    def forward(self, a):
        out = np.tanh(a)
        self.cache["out"] = out
        return out

    def backward(self, grad):
        return (grad * (1.0 - self.cache["out"] ** 2),)


class Exp(Function):
    name = "exp"

    def forward(self, a):
        out = np.exp(a)
        self.cache["out"] = out
        return out

    def backward(self, grad):
        return (grad * self.cache["out"],)


class Log(Function):
    name = "log"

    def forward(self, a):
        self.cache["a"] = a
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, grad):
        return (grad / self.cache["a"],)


class Square(Function):
    name = "square"

    def forward(self, a):
        self.cache["a"] = a
        return a * a

    def backward(self, grad):
        return (2.0 * self.cache["a"] * grad,)


class Sqrt(Function):
    name = "sqrt"

    def forward(self, a):
        with np.errstate(invalid="ignore"):
            out = np.sqrt(a)
        self.cache["out"] = out
        return out

    def backward(self, grad):
        out = self.cache["out"]
        # subgradient 0 where the value is 0
        scaled = np.divide(0.5 * grad, out, out=np.zeros_like(out), where=out > 0)
        return (scaled,)


class RowNormalize(Function):
    name = "row_normalize"

    def forward(self, a):
        if a.ndim != 2:
            raise ShapeError(self.name, a.shape, ("n", "k"))
        centered = a - a.mean(axis=1, keepdims=True)
        scale = np.sqrt(np.mean(centered * centered, axis=1, keepdims=True) + self.params["eps"])
        out = centered / scale
        self.cache["out"] = out
        self.cache["scale"] = scale
        return out

    def backward(self, grad):
        out, scale = self.cache["out"], self.cache["scale"]
        centered_grad = grad - grad.mean(axis=1, keepdims=True)
        return ((centered_grad - out * np.mean(grad * out, axis=1, keepdims=True)) / scale,)


class LogSumExp(Function):
    name = "logsumexp"

    def forward(self, a):
        axis = self.params["axis"]
        out = _logsumexp(a, axis=axis)
        self.cache["a"] = a
        self.cache["out"] = out
        return out

    def backward(self, grad):
        a, out, axis = self.cache["a"], self.cache["out"], self.params["axis"]
        if axis is None:
            return (grad * np.exp(a - out),)
        weights = np.exp(a - np.expand_dims(out, axis))
        return (np.expand_dims(grad, axis) * weights,)


class Clip(Function):
    name = "clip"

    def forward(self, a):
        lo, hi = self.params["lo"], self.params["hi"]
        self.cache["mask"] = (a >= lo) & (a <= hi)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        return (grad * self.cache["mask"],)


# Public API


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(_as_tensor(a), _as_tensor(b))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(_as_tensor(a), _as_tensor(b))


def mul(a: Any, b: Any) -> Tensor:
    """Hadamard (elementwise) product."""
    return Mul.apply(_as_tensor(a), _as_tensor(b))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a scalar constant."""
    return Scale.apply(_as_tensor(a), factor=float(factor))


def matmul(a: Tensor, b: Any) -> Tensor:
    return MatMul.apply(_as_tensor(a), _as_tensor(b))


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    return Sum.apply(_as_tensor(a), axis=axis)


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    return Mean.apply(_as_tensor(a), axis=axis)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not tensors:
        raise ShapeError("concat", ())
    return Concat.apply(*(_as_tensor(t) for t in tensors))


def gather(a: Tensor, index: Any) -> Tensor:
    """Select rows ``a[index]``."""
    return Gather.apply(_as_tensor(a), index=index)


def segment_sum(rows: Tensor, segments: Any, n_segments: int) -> Tensor:
    """Sum rows that share a segment id; the neighbor-aggregation primitive."""
    return SegmentSum.apply(_as_tensor(rows), segments=segments, n_segments=n_segments)


def elu(a: Tensor) -> Tensor:
    """Exponential linear unit with alpha = 1."""
    return Elu.apply(_as_tensor(a))


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(_as_tensor(a))


def tanh(a: Tensor) -> Tensor:
    return Tanh.apply(_as_tensor(a))


def exp(a: Tensor) -> Tensor:
    return Exp.apply(_as_tensor(a))


def log(a: Tensor) -> Tensor:
    return Log.apply(_as_tensor(a))


def square(a: Tensor) -> Tensor:
    return Square.apply(_as_tensor(a))


def sqrt(a: Tensor) -> Tensor:
    return Sqrt.apply(_as_tensor(a))


def logsumexp(a: Tensor, axis: Optional[int] = None) -> Tensor:
    return LogSumExp.apply(_as_tensor(a), axis=axis)


def row_normalize(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row to zero mean and unit variance (layer normalization)."""
    return RowNormalize.apply(_as_tensor(a), eps=float(eps))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    return Clip.apply(_as_tensor(a), lo=float(lo), hi=float(hi))


def transpose(a: Tensor) -> Tensor:
    return Transpose.apply(_as_tensor(a))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(_as_tensor(a), shape=tuple(int(s) for s in shape))
