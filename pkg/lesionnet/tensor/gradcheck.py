"""
Finite-difference verification of analytic gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Union

import numpy as np
from dataclasses_json import dataclass_json

from ..exceptions import InvalidArgumentException, NonDeterministicFunctionException
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

TensorFunction = Callable[..., Tensor]


@dataclass_json
@dataclass
class GradcheckReport:
    """Outcome of a finite-difference gradient check."""

    max_rel_error: float
    """Largest relative error over all checked elements."""
    passed: bool
    """Whether ``max_rel_error`` is within ``tol``."""
    tol: float
    """Tolerance the check was run at."""
    step: float
    """Central-difference step."""
    per_input: List[float] = field(default_factory=list)
    """Largest relative error per checked input, in argument order."""
    elements: int = 0
    """Number of checked elements."""


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom


def _evaluate(f: TensorFunction, xs: Sequence[Tensor]) -> float:
    out = f(*xs)
    return float(np.asarray(out.data, dtype=np.float64).reshape(-1)[0])


def analytic_gradients(f: TensorFunction, xs: Sequence[Tensor]) -> List[np.ndarray]:
    """Gradients of the scalar ``f(*xs)`` with respect to each of ``xs``, via the tape."""
    saved = [x.requires_grad for x in xs]
    try:
        for x in xs:
            x.requires_grad = True
            x.zero_grad()
        with Tape() as tape:
            out = f(*xs)
        if tape.produced(out):
            backward(tape, out)
        return [
            np.zeros(x.shape, dtype=np.float64) if x.grad is None else x.grad.astype(np.float64)
            for x in xs
        ]
    finally:
        for x, flag in zip(xs, saved):
            x.requires_grad = flag
            x.zero_grad()


def numeric_gradient(f: TensorFunction, xs: Sequence[Tensor], index: int, step: float) -> np.ndarray:
    """Central-difference gradient of ``f`` with respect to ``xs[index]``."""
    x = xs[index]
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = _evaluate(f, xs)
        flat[i] = original - step
        minus = _evaluate(f, xs)
        flat[i] = original
        grad[i] = (plus - minus) / (2.0 * step)
    return grad.reshape(x.shape)


def finite_diff_check(
    f: TensorFunction,
    x: Union[Tensor, Sequence[Tensor]],
    step: float = 1e-3,
    tol: float = 1e-3,
    floor: float = 1e-3,
) -> GradcheckReport:
    """
    Compare the tape gradient of the scalar function ``f`` with central differences.

    ``x`` may be a single tensor or a sequence of tensors; ``f`` receives them as
    positional arguments and every one of them is checked. Their data is perturbed in
    place and restored afterwards.

    :raises NonDeterministicFunctionException: if two evaluations at the same point differ
    """
    if step <= 0:
        raise InvalidArgumentException(f"step must be positive, got {step}")
    xs = [x] if isinstance(x, Tensor) else list(x)

    first = _evaluate(f, xs)
    second = _evaluate(f, xs)
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise NonDeterministicFunctionException(
            f"function returned {first!r} then {second!r} for identical inputs"
        )

    analytic = analytic_gradients(f, xs)
    per_input: List[float] = []
    elements = 0
    for index, a in enumerate(analytic):
        n = numeric_gradient(f, xs, index, step)
        err = relative_error(a, n, floor)
        per_input.append(float(err.max()) if err.size else 0.0)
        elements += err.size

    worst = max(per_input) if per_input else 0.0
    report = GradcheckReport(
        max_rel_error=worst,
        passed=worst <= tol,
        tol=tol,
        step=step,
        per_input=per_input,
        elements=elements,
    )
    logger.debug(f"Gradient check over {elements} elements: max relative error {worst:.3e}")
    return report
