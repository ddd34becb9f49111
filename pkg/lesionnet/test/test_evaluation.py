"""
Tests for the confusion matrix, the derived metrics and model evaluation.
"""

from typing import Sequence

import numpy as np
import pytest

from lesionnet.datapipe import ArrayDataset, Batch
from lesionnet.evaluation import (
    ConfusionMatrix,
    MetricsReport,
    balanced_accuracy,
    evaluate,
    overall_accuracy,
    per_class_precision,
    per_class_recall,
    predict,
    write_score_table,
)
from lesionnet.exceptions import ImageDecodeException, InvalidArgumentException, ShapeMismatchException


class FlakyDataset:
    """ArrayDataset whose listed ids fail to decode."""

    def __init__(self, inner: ArrayDataset, broken: Sequence[str]):
        self.inner = inner
        self.broken = set(broken)
        self.ids = inner.ids
        self.labels = inner.labels

    def __len__(self) -> int:
        return len(self.inner)

    def batch(self, indices: Sequence[int]) -> Batch:
        for i in indices:
            if self.ids[i] in self.broken:
                raise ImageDecodeException(f"cannot decode {self.ids[i]}")
        return self.inner.batch(indices)


def test_confusion_matrix_from_predictions():
    """Rows count true classes, columns predictions."""
    cm = ConfusionMatrix.from_predictions([0, 0, 1, 2], [0, 1, 1, 2], num_classes=3)
    np.testing.assert_array_equal(cm.counts, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    assert cm.total == 4
    assert ConfusionMatrix.from_predictions([], [], num_classes=3).total == 0


def test_confusion_matrix_validation():
    """Label ranges, lengths and matrix shapes are checked."""
    with pytest.raises(InvalidArgumentException):
        ConfusionMatrix.from_predictions([0, 7], [0, 1])
    with pytest.raises(ShapeMismatchException):
        ConfusionMatrix.from_predictions([0, 1], [0])
    with pytest.raises(InvalidArgumentException):
        ConfusionMatrix(np.zeros((2, 3)))
    with pytest.raises(ShapeMismatchException):
        ConfusionMatrix.zeros(3).merge(ConfusionMatrix.zeros(4))


def test_merge_adds_counts():
    """Merging matrices of disjoint batches equals the matrix of the union."""
    truths, preds = [0, 1, 2, 2, 1, 0], [0, 2, 2, 1, 1, 0]
    whole = ConfusionMatrix.from_predictions(truths, preds, num_classes=3)
    parts = ConfusionMatrix.from_predictions(truths[:2], preds[:2], 3).merge(
        ConfusionMatrix.from_predictions(truths[2:], preds[2:], 3)
    )
    np.testing.assert_array_equal(parts.counts, whole.counts)


def test_balanced_accuracy_is_mean_recall():
    """A majority-class predictor scores 1/C in balanced accuracy."""
    truths = [1] * 90 + [0] * 5 + [2] * 5
    cm = ConfusionMatrix.from_predictions(truths, [1] * 100, num_classes=3)
    assert overall_accuracy(cm) == pytest.approx(0.9)
    assert balanced_accuracy(cm) == pytest.approx(1.0 / 3.0)
    assert per_class_recall(cm) == [0.0, 1.0, 0.0]
    assert per_class_precision(cm) == [None, pytest.approx(0.9), None]


def test_empty_classes_are_excluded():
    """Classes without samples do not count towards the balanced accuracy."""
    cm = ConfusionMatrix.from_predictions([0, 0, 1, 1], [0, 1, 1, 1], num_classes=7)
    assert cm.empty_classes() == [2, 3, 4, 5, 6]
    assert per_class_recall(cm)[2] is None
    assert balanced_accuracy(cm) == pytest.approx((0.5 + 1.0) / 2)
    report = MetricsReport.from_matrix(cm)
    assert report.excluded_classes == ["BCC", "AKIEC", "BKL", "DF", "VASC"]


def test_equal_support_makes_both_accuracies_agree():
    """With the same number of samples per class, balanced accuracy equals overall accuracy."""
    rng = np.random.default_rng(5)
    truths = np.repeat(np.arange(7), 9)
    predictions = np.where(rng.random(truths.size) < 0.6, truths, rng.integers(0, 7, truths.size))
    cm = ConfusionMatrix.from_predictions(truths, predictions)
    assert balanced_accuracy(cm) == pytest.approx(overall_accuracy(cm), rel=1e-12)


def test_metrics_ignore_sample_order():
    """Shuffling (truth, prediction) pairs changes no metric."""
    rng = np.random.default_rng(6)
    truths = rng.integers(0, 7, 50)
    predictions = rng.integers(0, 7, 50)
    perm = rng.permutation(50)
    cm = ConfusionMatrix.from_predictions(truths, predictions)
    shuffled = ConfusionMatrix.from_predictions(truths[perm], predictions[perm])
    np.testing.assert_array_equal(shuffled.counts, cm.counts)
    assert balanced_accuracy(shuffled) == balanced_accuracy(cm)
    assert overall_accuracy(shuffled) == overall_accuracy(cm)
    assert per_class_recall(shuffled) == per_class_recall(cm)


def test_empty_matrix_scores_zero():
    """An empty matrix has zero accuracy of both kinds."""
    cm = ConfusionMatrix.zeros()
    assert balanced_accuracy(cm) == 0.0
    assert overall_accuracy(cm) == 0.0


def test_metrics_report_formats():
    """The report renders as key=value lines and as a table."""
    cm = ConfusionMatrix.from_predictions(list(range(7)), list(range(7)))
    report = MetricsReport.from_matrix(cm, decode_failures=["ISIC_9"])
    kv = report.to_key_values()
    assert "balanced_accuracy=1.000000" in kv
    assert "recall.MEL=1.000000" in kv
    assert "decode_failures=1" in kv
    text = report.to_text()
    assert "balanced accuracy  1.0000" in text
    assert "decode failures: 1" in text
    assert MetricsReport.from_json(report.to_json()) == report


def test_predict_breaks_ties_towards_lowest_index():
    """Equal maxima resolve to the first class."""
    probs = np.array([[0.2, 0.4, 0.4], [0.5, 0.5, 0.0], [0.1, 0.2, 0.7]])
    np.testing.assert_array_equal(predict(probs), [1, 0, 2])


def test_evaluate_counts_every_sample(tiny_model, image_dataset):
    """Every sample lands in the matrix and gets a probability row."""
    result = evaluate(tiny_model, image_dataset, batch_size=4)
    assert result.confusion.total == len(image_dataset)
    np.testing.assert_array_equal(result.confusion.row_sums(), np.full(7, 2))
    assert [image_id for image_id, _ in result.scores] == image_dataset.ids
    for _, probs in result.scores:
        assert probs.shape == (7,)
        assert probs.sum() == pytest.approx(1.0)
    assert result.decode_failures == []


def test_evaluate_is_deterministic_and_batch_independent(tiny_model, image_dataset):
    """Inference mode gives the same predictions for any batch size."""
    a = evaluate(tiny_model, image_dataset, batch_size=3)
    b = evaluate(tiny_model, image_dataset, batch_size=14)
    np.testing.assert_array_equal(a.confusion.counts, b.confusion.counts)
    for (_, pa), (_, pb) in zip(a.scores, b.scores):
        np.testing.assert_allclose(pa, pb, rtol=1e-4, atol=1e-6)


def test_evaluate_skips_undecodable_images(tiny_model, image_dataset):
    """Decode failures are reported by id and left out of the matrix."""
    broken = [image_dataset.ids[1], image_dataset.ids[8]]
    result = evaluate(tiny_model, FlakyDataset(image_dataset, broken), batch_size=4)
    assert result.decode_failures == broken
    assert result.confusion.total == len(image_dataset) - 2
    assert result.report().decode_failures == broken


def test_evaluate_rejects_bad_batch_size(tiny_model, image_dataset):
    """The batch size must be positive."""
    with pytest.raises(InvalidArgumentException):
        evaluate(tiny_model, image_dataset, batch_size=0)


def test_score_table(tmp_path):
    """The score table has one header row and one row per image."""
    scores = [("ISIC_1", np.full(7, 1.0 / 7.0)), ("ISIC_2", np.eye(7)[3])]
    path = write_score_table(scores, tmp_path / "scores.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "image,MEL,NV,BCC,AKIEC,BKL,DF,VASC"
    assert lines[2] == "ISIC_2,0.000000,0.000000,0.000000,1.000000,0.000000,0.000000,0.000000"
    assert len(lines) == 3


if __name__ == "__main__":
    pytest.main([__file__])
