import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..datapipe.dataset import Batch, Dataset
from ..datapipe.manifest import CLASS_NAMES
from ..exceptions import ImageDecodeException, InvalidArgumentException
from ..losses.softmax import softmax
from ..nn import FeatureModel
from ..tensor import Tensor
from .metrics import ConfusionMatrix, MetricsReport

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

SCORE_HEADER = ("image",) + CLASS_NAMES


@dataclass
class EvaluationResult:
    confusion: ConfusionMatrix
    scores: List[Tuple[str, np.ndarray]] = field(default_factory=list)
    """Per-image class probabilities, in dataset order."""
    decode_failures: List[str] = field(default_factory=list)

    def report(self) -> MetricsReport:
        return MetricsReport.from_matrix(self.confusion, self.decode_failures)


def predict(probabilities: np.ndarray) -> np.ndarray:
    """Arg-max per row; among equal maxima the lowest class index wins."""
    return np.argmax(probabilities, axis=1)


def _load(dataset: Dataset, indices: List[int], failures: List[str]) -> Union[Batch, None]:
    try:
        return dataset.batch(indices)
    except ImageDecodeException:
        pass
    good: List[int] = []
    for i in indices:
        try:
            dataset.batch([i])
            good.append(i)
        except ImageDecodeException as e:
            logger.warning(f"Skipping {dataset.ids[i]}: {e}")
            failures.append(dataset.ids[i])
    return dataset.batch(good) if good else None


def evaluate(model: FeatureModel, dataset: Dataset, batch_size: int = 32) -> EvaluationResult:
    """
    Classify every image of ``dataset`` in inference mode.

    Images that fail to decode are reported by id and left out of the matrix.
    """
    if batch_size < 1:
        raise InvalidArgumentException(f"batch_size must be >= 1, got {batch_size}")
    num_classes = model.num_classes
    cm = ConfusionMatrix.zeros(num_classes)
    result = EvaluationResult(cm)
    for start in range(0, len(dataset), batch_size):
        indices = list(range(start, min(start + batch_size, len(dataset))))
        batch = _load(dataset, indices, result.decode_failures)
        if batch is None:
            continue
        logits, _ = model.forward(Tensor(batch.x), mode="eval")
        probs = softmax(logits.data.astype(np.float64))
        cm = cm.merge(ConfusionMatrix.from_predictions(batch.labels, predict(probs), num_classes))
        result.scores.extend(zip(batch.ids, probs))
    result.confusion = cm
    if result.decode_failures:
        logger.warning(f"{len(result.decode_failures)} images could not be decoded and were excluded")
    logger.info(f"Evaluated {cm.total} images")
    return result


def write_score_table(scores: List[Tuple[str, np.ndarray]], path: PathLike) -> Path:
    """``image,MEL,NV,BCC,AKIEC,BKL,DF,VASC`` probability rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SCORE_HEADER)
        for image_id, probs in scores:
            writer.writerow([image_id] + [f"{p:.6f}" for p in probs])
    return path
