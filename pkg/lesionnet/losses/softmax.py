from typing import Sequence, Union

import numpy as np

from ..exceptions import InvalidArgumentException, shape_mismatch_exception
from ..tensor import Tensor, apply_op

Labels = Union[Sequence[int], np.ndarray]


def check_labels(labels: Labels, batch: int, num_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != batch:
        raise shape_mismatch_exception("labels", (y.size,), (batch,))
    bad = (y < 0) | (y >= num_classes)
    if bad.any():
        raise InvalidArgumentException(
            f"label {int(y[bad][0])} out of range [0, {num_classes}) at batch position {int(np.argmax(bad))}"
        )
    return y


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Labels) -> Tensor:
    """
    Batch mean of ``−log softmax(logits)[label]`` for ``m×C`` logits.

    Max-subtraction keeps the exponentials finite for any logit magnitude.
    """
    if logits.ndim != 2:
        raise InvalidArgumentException(f"logits must be m×C, got shape {logits.shape}")
    m, c = logits.shape
    y = check_labels(labels, m, c)
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(m)
    loss = (log_norm - shifted[rows, y]).mean()

    def _backward(g: np.ndarray):
        grad = softmax(z)
        grad[rows, y] -= 1
        return (grad * (g / m),)

    return apply_op("softmax_cross_entropy", (logits,), np.asarray(loss), _backward)
