"""
Center loss and the class-center bank it pulls features towards.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Literal, Mapping, Union

import numpy as np

from ..exceptions import InvalidArgumentException, shape_mismatch_exception
from ..tensor import Tensor, apply_op
from .softmax import Labels, check_labels

logger = logging.getLogger(__name__)

Reduction = Literal["sum", "mean"]

CENTER_PREFIX = "center_"


@dataclass
class CenterBank:
    """Class centers ``C×d`` and their update rate."""

    centers: np.ndarray
    alpha: float = 0.5

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers)
        if self.centers.ndim != 2:
            raise InvalidArgumentException(f"centers must be C×d, got shape {self.centers.shape}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidArgumentException(f"center update rate alpha must be in (0, 1], got {self.alpha}")

    @classmethod
    def zeros(cls, num_classes: int, dim: int, alpha: float = 0.5, dtype=np.float32) -> "CenterBank":
        return cls(np.zeros((num_classes, dim), dtype=dtype), alpha)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.centers).all())

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Centers by checkpoint name, ``center_0`` .. ``center_{C-1}``."""
        return {f"{CENTER_PREFIX}{j}": self.centers[j] for j in range(self.num_classes)}

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        for j in range(self.num_classes):
            value = arrays[f"{CENTER_PREFIX}{j}"]
            if value.shape != (self.dim,):
                raise shape_mismatch_exception(f"{CENTER_PREFIX}{j}", value.shape, (self.dim,))
            self.centers[j] = value

    def update(self, features: Union[Tensor, np.ndarray], labels: Labels) -> None:
        center_update(self, features, labels)


def center_loss(
    features: Tensor, labels: Labels, bank: CenterBank, reduction: Reduction = "sum"
) -> Tensor:
    """
    ``½ Σᵢ ‖xᵢ − c_{yᵢ}‖²`` over the batch (divided by the batch size for ``mean``).

    Differentiable with respect to ``features`` only; centers move through
    :func:`center_update`.
    """
    if reduction not in ("sum", "mean"):
        raise InvalidArgumentException(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    if features.ndim != 2 or features.shape[1] != bank.dim:
        raise shape_mismatch_exception("center_loss", features.shape, bank.centers.shape)
    m = features.shape[0]
    y = check_labels(labels, m, bank.num_classes)
    diff = features.data - bank.centers[y].astype(features.dtype)
    factor = features.dtype.type(1.0 / m if reduction == "mean" else 1.0)
    loss = 0.5 * factor * np.sum(diff * diff)

    def _backward(g: np.ndarray):
        return (diff * (g * factor),)

    return apply_op("center_loss", (features,), np.asarray(loss), _backward)


def center_update(bank: CenterBank, features: Union[Tensor, np.ndarray], labels: Labels) -> None:
    """
    Move every class present in the batch towards its features:
    ``Δc_j = Σ_{yᵢ=j}(c_j − xᵢ) / (1 + n_j)``, ``c_j ← c_j − α·Δc_j``.
    """
    x = features.data if isinstance(features, Tensor) else np.asarray(features)
    if x.ndim != 2 or x.shape[1] != bank.dim:
        raise shape_mismatch_exception("center_update", x.shape, bank.centers.shape)
    y = check_labels(labels, x.shape[0], bank.num_classes)
    x = x.astype(np.float64)
    counts = np.bincount(y, minlength=bank.num_classes)
    sums = np.zeros((bank.num_classes, bank.dim), dtype=np.float64)
    np.add.at(sums, y, x)
    present = counts > 0
    c = bank.centers[present].astype(np.float64)
    n = counts[present][:, None]
    delta = (n * c - sums[present]) / (1.0 + n)
    bank.centers[present] = (c - bank.alpha * delta).astype(bank.centers.dtype)
