"""
Property experiments run end to end on synthetic data.

``run_toy_discriminativeness`` trains a small extractor on seven 2-D Gaussian clusters with
and without the center term and compares the intra-class spread of the learned features.
``run_desk_scale`` trains a reduced DenseNet-BC on 64×64 coloured shapes and evaluates it on
a held-out set.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import attrs
import numpy as np
from dataclasses_json import dataclass_json

from .datapipe.dataset import ArrayDataset
from .datapipe.images import NormalizationStats, normalize
from .datapipe.synthetic import gaussian_clusters, shapes_dataset
from .evaluation.evaluate import evaluate, predict
from .evaluation.metrics import MetricsReport
from .losses import LossConfig
from .model.arch import ArchConfig
from .model.densenet import DenseNet
from .nn import FeatureModel, Mode, Parameter, check_mode, conv_fan_in, he_init, linear, relu
from .rng import derive_seed
from .run_config import RunConfig, RunSettings
from .tensor import Tensor
from .trainer import (
    MemorySink,
    OptimizerConfig,
    TrainingLogWriter,
    TrainingReport,
    TrainingSink,
    load_checkpoint,
    train,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

DESK_TRAIN_COUNTS = (86, 86, 86, 86, 86, 85, 85)
DESK_TEST_PER_CLASS = 20
DESK_IMAGE_SIZE = 64


class ToyNet(FeatureModel):
    """``2 → hidden → 2`` ReLU extractor followed by a linear classifier."""

    def __init__(
        self, hidden: int = 16, num_classes: int = 7, in_dim: int = 2, feature_dim: int = 2, seed: int = 0
    ):
        super().__init__()
        self._num_classes = num_classes
        self._feature_dim = feature_dim
        shapes = {
            "fc1.weight": (hidden, in_dim),
            "fc2.weight": (feature_dim, hidden),
            "fc.weight": (num_classes, feature_dim),
        }
        for name, shape in shapes.items():
            w = he_init(shape, conv_fan_in(shape), derive_seed(seed, "init", name))
            self.register_parameter(name, Parameter(w.data))
            bias = name.replace("weight", "bias")
            self.register_parameter(bias, Parameter(np.zeros(shape[0], dtype=w.dtype)))

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def feature_dim(self) -> int:
        return self._feature_dim

    def forward(self, x: Tensor, mode: Mode = "train") -> Tuple[Tensor, Tensor]:
        check_mode(mode)
        p = self.parameter
        h = relu(linear(x, p("fc1.weight"), p("fc1.bias")))
        features = linear(h, p("fc2.weight"), p("fc2.bias"))
        return linear(features, p("fc.weight"), p("fc.bias")), features


def intra_class_variance(features: np.ndarray, labels: np.ndarray) -> float:
    """Mean over classes of the mean squared distance of a class's features to their mean."""
    per_class = []
    for c in np.unique(labels):
        x = features[labels == c].astype(np.float64)
        per_class.append(float(((x - x.mean(axis=0)) ** 2).sum(axis=1).mean()))
    return float(np.mean(per_class))


@dataclass_json
@dataclass
class ToyResult:
    lambda_: float
    steps: int
    variance_softmax: float
    """Intra-class feature variance with the softmax term alone."""
    variance_joint: float
    accuracy_softmax: float
    accuracy_joint: float

    @property
    def variance_ratio(self) -> float:
        return self.variance_joint / self.variance_softmax


def _train_toy(
    x: np.ndarray, y: np.ndarray, lambda_: float, steps: int, seed: int, lr: float, batch_size: int
) -> Tuple[float, float]:
    model = ToyNet(seed=seed)
    loss_cfg = LossConfig(lambda_=lambda_, center_reduction="mean")
    optim_cfg = OptimizerConfig(
        base_lr=lr,
        weight_decay=0.0,
        lr_step=max(steps, 1),
        max_iter=steps,
        batch_size=batch_size,
        log_every=500,
        checkpoint_every=0,
    )
    train(model, ArrayDataset(x, y), loss_cfg, optim_cfg, seed=seed)
    logits, features = model.forward(Tensor(x), mode="eval")
    accuracy = float((predict(logits.data) == y).mean())
    return intra_class_variance(features.data, y), accuracy


def run_toy_discriminativeness(
    seed: int = 0,
    steps: int = 2000,
    lambda_: float = 0.8,
    per_class: int = 100,
    lr: float = 0.02,
    batch_size: int = 70,
) -> ToyResult:
    """
    Train the same seeded extractor twice on the cluster problem, once with ``λ = 0`` and
    once with ``lambda_``, and measure the spread of the 2-D features of each class.
    """
    x, y = gaussian_clusters(per_class, seed)
    var_s, acc_s = _train_toy(x, y, 0.0, steps, seed, lr, batch_size)
    var_j, acc_j = _train_toy(x, y, lambda_, steps, seed, lr, batch_size)
    result = ToyResult(lambda_, steps, var_s, var_j, acc_s, acc_j)
    logger.info(
        f"Toy problem: intra-class variance {var_s:.4f} (softmax) vs {var_j:.4f} (joint), "
        f"ratio {result.variance_ratio:.3f}"
    )
    return result


def desk_scale_data(seed: int = 0) -> Tuple[ArrayDataset, ArrayDataset, NormalizationStats]:
    """Normalized 64×64 shape images: 600 for training, 140 held out."""
    size = (DESK_IMAGE_SIZE, DESK_IMAGE_SIZE)
    train_ids, train_images, train_labels = shapes_dataset(DESK_TRAIN_COUNTS, size, seed, prefix="TRAIN")
    test_ids, test_images, test_labels = shapes_dataset(DESK_TEST_PER_CLASS, size, seed, prefix="TEST")
    stats = NormalizationStats.from_images(train_images)
    train_ds = ArrayDataset(normalize(train_images, stats).data, train_labels, train_ids)
    test_ds = ArrayDataset(normalize(test_images, stats).data, test_labels, test_ids)
    return train_ds, test_ds, stats


def desk_scale_config(seed: int = 0, iterations: int = 3000, checkpoint_every: int = 1000) -> RunConfig:
    return RunConfig(
        arch=ArchConfig(block_sizes=(2, 4, 4), growth_rate=12, input_size=DESK_IMAGE_SIZE, freeze_boundary=None),
        loss=LossConfig(center_reduction="mean"),
        optim=OptimizerConfig(
            lr_step=max(2 * iterations // 3, 1),
            max_iter=iterations,
            checkpoint_every=checkpoint_every,
        ),
        run=RunSettings(seed=seed),
    )


@dataclass_json
@dataclass
class DeskScaleResult:
    metrics: MetricsReport
    training: TrainingReport
    checkpoint_path: str
    checkpoint_digest: str
    """SHA-256 of the checkpoint written after the last step."""
    log_lines: List[str] = field(default_factory=list)

    @property
    def balanced_accuracy(self) -> float:
        return self.metrics.balanced_accuracy


def run_desk_scale(
    work_dir: PathLike,
    seed: int = 0,
    iterations: int = 3000,
    stop_at: Optional[int] = None,
    resume_from: Optional[PathLike] = None,
    checkpoint_every: int = 1000,
) -> DeskScaleResult:
    """
    Train the reduced network on the shapes data and evaluate it on the held-out images.

    ``stop_at`` ends training early at that iteration; ``resume_from`` continues from a
    checkpoint. Both keep the configuration of the full ``iterations`` run, so an
    interrupted and resumed run writes the same final checkpoint as an uninterrupted one.
    """
    work = Path(work_dir)
    config = desk_scale_config(seed, iterations, checkpoint_every)
    config.write_resolved(work / "config.resolved")
    train_ds, test_ds, stats = desk_scale_data(seed)

    optim_cfg = config.optim if stop_at is None else attrs.evolve(config.optim, max_iter=stop_at)
    model = DenseNet(config.arch, seed)
    resume = load_checkpoint(resume_from) if resume_from is not None else None
    memory = MemorySink()
    sinks: List[TrainingSink] = [TrainingLogWriter(work / "train.log"), memory]
    report = train(
        model,
        train_ds,
        config.loss,
        optim_cfg,
        seed=seed,
        sinks=sinks,
        checkpoint_dir=work / "checkpoints",
        resume=resume,
        config_digest=config.digest(),
        metadata=config.to_metadata(),
        stats=stats,
    )
    assert report.checkpoint_path is not None
    digest = load_checkpoint(report.checkpoint_path).digest()
    metrics = evaluate(model, test_ds).report()
    logger.info(f"Desk-scale run: balanced accuracy {metrics.balanced_accuracy:.4f} after {report.final_iteration}")
    return DeskScaleResult(
        metrics=metrics,
        training=report,
        checkpoint_path=report.checkpoint_path,
        checkpoint_digest=digest,
        log_lines=[r.to_line() for r in memory.records],
    )
