"""
Confusion matrix and the metrics derived from it.

Every metric is a pure function of the matrix. Classes without samples are left out of
the balanced accuracy and listed separately.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from dataclasses_json import dataclass_json
from sklearn.metrics import confusion_matrix

from ..datapipe.manifest import CLASS_NAMES
from ..exceptions import InvalidArgumentException, shape_mismatch_exception

logger = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """``C×C`` counts; rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise InvalidArgumentException(f"confusion matrix must be square, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise InvalidArgumentException("confusion matrix counts must be non-negative")

    @classmethod
    def zeros(cls, num_classes: int = len(CLASS_NAMES)) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @classmethod
    def from_predictions(
        cls, truths: Sequence[int], predictions: Sequence[int], num_classes: int = len(CLASS_NAMES)
    ) -> "ConfusionMatrix":
        y = np.asarray(truths, dtype=np.int64)
        p = np.asarray(predictions, dtype=np.int64)
        if y.shape != p.shape:
            raise shape_mismatch_exception("confusion matrix", y.shape, p.shape)
        if y.size == 0:
            return cls.zeros(num_classes)
        for name, arr in (("truth", y), ("prediction", p)):
            if arr.min() < 0 or arr.max() >= num_classes:
                raise InvalidArgumentException(f"{name} labels must be in [0, {num_classes})")
        return cls(confusion_matrix(y, p, labels=list(range(num_classes))))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.counts.shape != self.counts.shape:
            raise shape_mismatch_exception("confusion matrix merge", self.counts.shape, other.counts.shape)
        return ConfusionMatrix(self.counts + other.counts)

    def empty_classes(self) -> List[int]:
        return [int(j) for j in np.flatnonzero(self.row_sums() == 0)]


def per_class_recall(cm: ConfusionMatrix) -> List[Optional[float]]:
    """``cm[j, j] / row_j``; ``None`` for a class without samples."""
    rows = cm.row_sums()
    diag = np.diag(cm.counts)
    return [float(diag[j] / rows[j]) if rows[j] else None for j in range(cm.num_classes)]


def per_class_precision(cm: ConfusionMatrix) -> List[Optional[float]]:
    """``cm[j, j] / column_j``; ``None`` for a class never predicted."""
    cols = cm.column_sums()
    diag = np.diag(cm.counts)
    return [float(diag[j] / cols[j]) if cols[j] else None for j in range(cm.num_classes)]


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over the classes that have samples (0.0 for an empty matrix)."""
    recalls = [r for r in per_class_recall(cm) if r is not None]
    excluded = cm.empty_classes()
    if excluded and recalls:
        logger.warning(f"Balanced accuracy excludes classes without samples: {_names(excluded)}")
    return float(np.mean(recalls)) if recalls else 0.0


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """``trace / total`` (0.0 for an empty matrix)."""
    total = cm.total
    return float(np.trace(cm.counts) / total) if total else 0.0


def _names(labels: Sequence[int]) -> List[str]:
    return [CLASS_NAMES[j] if j < len(CLASS_NAMES) else str(j) for j in labels]


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.6f}"


@dataclass_json
@dataclass
class MetricsReport:
    samples: int
    overall_accuracy: float
    balanced_accuracy: float
    recall: List[Optional[float]]
    precision: List[Optional[float]]
    support: List[int]
    excluded_classes: List[str] = field(default_factory=list)
    """Classes without samples, left out of the balanced accuracy."""
    decode_failures: List[str] = field(default_factory=list)
    """Ids that could not be read and were left out of the matrix."""
    class_names: List[str] = field(default_factory=lambda: list(CLASS_NAMES))

    @classmethod
    def from_matrix(cls, cm: ConfusionMatrix, decode_failures: Sequence[str] = ()) -> "MetricsReport":
        names = _names(range(cm.num_classes))
        return cls(
            samples=cm.total,
            overall_accuracy=overall_accuracy(cm),
            balanced_accuracy=balanced_accuracy(cm),
            recall=per_class_recall(cm),
            precision=per_class_precision(cm),
            support=[int(v) for v in cm.row_sums()],
            excluded_classes=_names(cm.empty_classes()),
            decode_failures=list(decode_failures),
            class_names=names,
        )

    def to_key_values(self) -> str:
        """Machine-readable ``key=value`` lines."""
        lines = [
            f"samples={self.samples}",
            f"overall_accuracy={self.overall_accuracy:.6f}",
            f"balanced_accuracy={self.balanced_accuracy:.6f}",
        ]
        for name, r, p, s in zip(self.class_names, self.recall, self.precision, self.support):
            lines += [f"recall.{name}={_fmt(r)}", f"precision.{name}={_fmt(p)}", f"support.{name}={s}"]
        lines.append(f"excluded_classes={','.join(self.excluded_classes)}")
        lines.append(f"decode_failures={len(self.decode_failures)}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(len(n) for n in self.class_names)
        lines = [f"{'class':<{width}}  {'support':>7}  {'recall':>8}  {'precision':>9}"]
        for name, r, p, s in zip(self.class_names, self.recall, self.precision, self.support):
            lines.append(f"{name:<{width}}  {s:>7}  {_fmt(r):>8}  {_fmt(p):>9}")
        lines.append("")
        lines.append(f"samples            {self.samples}")
        lines.append(f"overall accuracy   {self.overall_accuracy:.4f}")
        lines.append(f"balanced accuracy  {self.balanced_accuracy:.4f}")
        if self.excluded_classes:
            lines.append(f"excluded (no samples): {', '.join(self.excluded_classes)}")
        if self.decode_failures:
            lines.append(f"decode failures: {len(self.decode_failures)}")
        return "\n".join(lines) + "\n"
