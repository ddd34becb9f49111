"""
Dense N-D tensors and the operation tape used for reverse-mode differentiation.

A :class:`Tensor` wraps a C-ordered numpy array. Operations executed while a :class:`Tape`
is active and at least one input requires a gradient are recorded on that tape together
with a backward rule; :func:`backward` replays the tape in reverse and leaves
``dLoss/dLeaf`` in the ``grad`` slot of every leaf that requires one.
"""

import logging
import os
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import Self

from ..exceptions import NonFiniteException, TapeException

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

ArrayLike = Union[np.ndarray, Sequence, float, int]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_debug_checks = os.getenv("LESIONNET_DEBUG", "false").lower() == "true"


def set_debug_checks(enabled: bool) -> None:
    """Enable or disable the finite-value check performed after every operation."""
    global _debug_checks
    _debug_checks = enabled


def debug_checks_enabled() -> bool:
    return _debug_checks


class Tensor:
    """
    Dense N-dimensional real array with an optional gradient slot.

    ``data`` is always a C-contiguous array, so its flat view is the row-major layout.
    Activations follow the NCHW convention.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None,
    ):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data: np.ndarray = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, dtype=DEFAULT_DTYPE) -> Self:
        return cls(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape: Sequence[int], requires_grad: bool = False, dtype=DEFAULT_DTYPE) -> Self:
        return cls(np.ones(tuple(shape), dtype=dtype), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise TapeException(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.dtype)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the implementations live in ``ops``.

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import ops

        return ops.add(self, ops.as_tensor(other, like=self))

    def __radd__(self, other: float) -> "Tensor":
        from . import ops

        return ops.add(ops.as_tensor(other, like=self), self)

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import ops

        return ops.subtract(self, ops.as_tensor(other, like=self))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import ops

        if isinstance(other, Tensor):
            return ops.multiply(self, other)
        return ops.scale(self, float(other))

    def __rmul__(self, other: float) -> "Tensor":
        from . import ops

        return ops.scale(self, float(other))

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis)

    def mean(self) -> "Tensor":
        from . import ops

        return ops.mean(self)

    def reshape(self, *shape: int) -> "Tensor":
        from . import ops

        return ops.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


@dataclass
class Node:
    """One recorded operation."""

    op: str
    """Name of the operation."""
    inputs: Tuple[Tensor, ...]
    """Input tensors, in argument order."""
    output: Tensor
    """Tensor produced by the operation."""
    backward: BackwardFn
    """Maps the output gradient to one gradient (or None) per input."""


class Tape:
    """
    Ordered record of differentiable operations.

    Used as a context manager; operations run inside the ``with`` block are recorded.
    A tape is single-owner: it must not be shared between threads while recording or
    replaying.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._produced: Dict[int, Tensor] = {}

    def __enter__(self) -> Self:
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)
        self._produced[id(node.output)] = node.output

    def produced(self, tensor: Tensor) -> bool:
        return self._produced.get(id(tensor)) is tensor

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


_local = threading.local()


def _stack() -> List[Tape]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def active_tape() -> Optional[Tape]:
    """Return the innermost active tape of the calling thread, if any."""
    stack = _stack()
    return stack[-1] if stack else None


def apply_op(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward_fn: BackwardFn,
) -> Tensor:
    """
    Wrap ``out_data`` into a tensor and record the operation on the active tape.

    The node is only recorded when some input requires a gradient.
    """
    dtype = inputs[0].dtype if inputs else DEFAULT_DTYPE
    out = Tensor(np.asarray(out_data, dtype=dtype), dtype=dtype)
    if _debug_checks and not out.is_finite():
        raise NonFiniteException(f"{op} produced non-finite values (output shape {out.shape})")
    requires_grad = any(t.requires_grad for t in inputs)
    if requires_grad:
        out.requires_grad = True
        tape = active_tape()
        if tape is not None:
            tape.record(Node(op=op, inputs=tuple(inputs), output=out, backward=backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """
    Populate ``grad`` of every leaf on ``tape`` that requires a gradient with ``dLoss/dLeaf``.

    Gradients of a tensor consumed by several operations are summed. Leaf gradients are
    added to any gradient already present; call :meth:`Tensor.zero_grad` between steps.
    """
    if loss.size != 1:
        raise TapeException(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.produced(loss):
        raise TapeException("loss tensor was not produced by this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward(g)
        for inp, ig in zip(node.inputs, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
            if not tape.produced(inp):
                leaves[key] = inp

    for key, leaf in leaves.items():
        g = np.asarray(grads[key], dtype=leaf.dtype).reshape(leaf.shape)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
