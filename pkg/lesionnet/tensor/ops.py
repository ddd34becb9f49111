"""
Differentiable tensor operations: broadcasting arithmetic, matrix product, reductions and
shape manipulation.
"""

from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import InvalidArgumentException, shape_mismatch_exception
from .tensor import Tensor, apply_op

ElementwiseKind = Literal["add", "subtract", "multiply"]


def as_tensor(value: Union[Tensor, float, int, np.ndarray], like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes that broadcasting expanded so that it matches ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def broadcast_shape(a: Sequence[int], b: Sequence[int]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(tuple(a), tuple(b)))
    except ValueError:
        raise shape_mismatch_exception("broadcast", a, b) from None


def elementwise(op_kind: ElementwiseKind, a: Tensor, b: Tensor) -> Tensor:
    """Componentwise ``add``, ``subtract`` or ``multiply`` with broadcasting over size-1 axes."""
    broadcast_shape(a.shape, b.shape)
    x, y = a.data, b.data

    if op_kind == "add":
        out = x + y

        def _backward(g: np.ndarray):
            return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    elif op_kind == "subtract":
        out = x - y

        def _backward(g: np.ndarray):
            return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    elif op_kind == "multiply":
        out = x * y

        def _backward(g: np.ndarray):
            return unbroadcast(g * y, a.shape), unbroadcast(g * x, b.shape)

    else:
        raise InvalidArgumentException(f"unknown elementwise operation {op_kind!r}")

    return apply_op(op_kind, (a, b), out, _backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("subtract", a, b)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("multiply", a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant scalar."""
    f = a.dtype.type(factor)

    def _backward(g: np.ndarray):
        return (g * f,)

    return apply_op("scale", (a,), a.data * f, _backward)


def square(a: Tensor) -> Tensor:
    x = a.data

    def _backward(g: np.ndarray):
        return (2 * x * g,)

    return apply_op("square", (a,), x * x, _backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``m×k`` and ``k×n`` tensors."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise shape_mismatch_exception("matmul", a.shape, b.shape)
    x, y = a.data, b.data

    def _backward(g: np.ndarray):
        return g @ y.T, x.T @ g

    return apply_op("matmul", (a, b), x @ y, _backward)


def sum(a: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> Tensor:
    shape = a.shape
    out = np.sum(a.data, axis=axis)

    def _backward(g: np.ndarray):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return apply_op("sum", (a,), np.asarray(out), _backward)


def mean(a: Tensor) -> Tensor:
    n = a.size
    shape = a.shape

    def _backward(g: np.ndarray):
        return (np.full(shape, g / n, dtype=g.dtype),)

    return apply_op("mean", (a,), np.asarray(np.mean(a.data)), _backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise shape_mismatch_exception("reshape", original, shape) from None

    def _backward(g: np.ndarray):
        return (g.reshape(original),)

    return apply_op("reshape", (a,), out, _backward)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(perm))

    def _backward(g: np.ndarray):
        return (np.transpose(g, inverse),)

    return apply_op("transpose", (a,), np.transpose(a.data, perm), _backward)
