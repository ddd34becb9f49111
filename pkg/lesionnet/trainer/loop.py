"""
Training loop: batch → forward → ``Ls + λ·Lc`` → backward → SGD step → center update.

The batch drawn at step ``t`` depends only on the seed and ``t``, and every piece of
mutable state (parameters, BatchNorm statistics, momentum buffers, centers) is in the
checkpoint, so resuming from a checkpoint reproduces the uninterrupted run.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, TextIO, Union

import numpy as np
from dataclasses_json import dataclass_json

from ..datapipe.dataset import Dataset
from ..datapipe.images import NormalizationStats
from ..exceptions import CheckpointException, TrainingException, non_finite_loss_exception
from ..losses import CenterBank, LossConfig, center_loss, joint_loss, softmax_cross_entropy
from ..model.densenet import record_of
from ..nn import FeatureModel
from ..tensor import Tape, Tensor, backward
from .checkpoint import DIGEST_SIZE, Checkpoint, save_checkpoint
from .optimizer import SGD, OptimizerConfig, lr_at
from .sampler import EpochSampler

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

LOG_HEADER = "iter,loss,ls,lc,lr"


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    """1-based index of the completed step."""
    loss: float
    ls: float
    lc: float
    lr: float

    def to_line(self) -> str:
        return f"{self.iteration},{self.loss!r},{self.ls!r},{self.lc!r},{self.lr!r}"


class TrainingSink(Protocol):
    def on_start(self, iteration: int) -> None: ...

    def on_step(self, record: StepRecord) -> None: ...

    def close(self) -> None: ...


class TrainingLogWriter:
    """
    ``iter,loss,ls,lc,lr`` text log under a ``#`` header line.

    A run starting at iteration ``t`` keeps the lines of steps ``1..t`` already in the file
    and drops the rest, so a fresh run rewrites the log and a resumed run continues it.
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._f: Optional[TextIO] = None

    def _kept_lines(self, iteration: int) -> List[str]:
        if iteration == 0 or not self.path.exists():
            return []
        kept = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            step = line.partition(",")[0]
            if step.isdigit() and int(step) <= iteration:
                kept.append(line)
        if len(kept) != iteration:
            logger.warning(f"{self.path} holds {len(kept)} of the {iteration} steps before the resume point")
        return kept

    def on_start(self, iteration: int) -> None:
        kept = self._kept_lines(iteration)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = self.path.open("w", encoding="utf-8")
        self._f.write(f"# {LOG_HEADER}\n")
        for line in kept:
            self._f.write(line + "\n")
        self._f.flush()

    def on_step(self, record: StepRecord) -> None:
        assert self._f is not None, "on_start was not called"
        self._f.write(record.to_line() + "\n")
        self._f.flush()

    def close(self) -> None:
        if self._f is not None:
            self._f.close()
            self._f = None


@dataclass
class MemorySink:
    records: List[StepRecord] = field(default_factory=list)

    def on_start(self, iteration: int) -> None:
        pass

    def on_step(self, record: StepRecord) -> None:
        self.records.append(record)

    def close(self) -> None:
        pass


@dataclass_json
@dataclass
class TrainingReport:
    start_iteration: int = 0
    final_iteration: int = 0
    loss: List[float] = field(default_factory=list)
    ls: List[float] = field(default_factory=list)
    lc: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    checkpoint_path: Optional[str] = None
    """Checkpoint written after the last step."""

    @property
    def steps(self) -> int:
        return self.final_iteration - self.start_iteration


@dataclass
class TrainingState:
    """Everything a training run mutates besides the model."""

    optimizer: SGD
    centers: CenterBank
    iteration: int = 0


def collect_checkpoint(
    model: FeatureModel,
    state: TrainingState,
    config_digest: bytes = b"\x00" * DIGEST_SIZE,
    metadata: Optional[Dict[str, Any]] = None,
    stats: Optional[NormalizationStats] = None,
) -> Checkpoint:
    checkpoint = Checkpoint(iteration=state.iteration, config_digest=config_digest, metadata=dict(metadata or {}))
    for name, value in model.state_arrays().items():
        checkpoint.put(name, value)
    for name, value in state.optimizer.state_arrays().items():
        checkpoint.put(name, value)
    for name, value in state.centers.state_arrays().items():
        checkpoint.put(name, value)
    if stats is not None:
        for name, value in stats.state_arrays().items():
            checkpoint.put(name, value)
    return checkpoint


def restore_checkpoint(model: FeatureModel, state: TrainingState, checkpoint: Checkpoint) -> None:
    """
    Load model tensors, momentum buffers and centers from ``checkpoint``.

    :raises CheckpointException: a model tensor or center is missing
    """
    model_state = model.state_arrays()
    missing = [n for n in model_state if n not in checkpoint]
    if missing:
        raise CheckpointException(f"checkpoint lacks {len(missing)} model tensors, e.g. {missing[0]!r}")
    for name in model_state:
        model.assign(name, checkpoint.get(name))
    state.optimizer.buffers.clear()
    state.optimizer.load_state(checkpoint.items())
    try:
        state.centers.load_state(checkpoint.tensors)
    except KeyError as e:
        raise CheckpointException(f"checkpoint lacks center {e}") from None
    state.iteration = checkpoint.iteration


def checkpoint_name(iteration: int) -> str:
    return f"iter_{iteration:07d}.dckp"


def train(
    model: FeatureModel,
    dataset: Dataset,
    loss_cfg: LossConfig,
    optim_cfg: OptimizerConfig,
    seed: int = 0,
    sinks: Sequence[TrainingSink] = (),
    checkpoint_dir: Optional[PathLike] = None,
    resume: Optional[Checkpoint] = None,
    config_digest: bytes = b"\x00" * DIGEST_SIZE,
    metadata: Optional[Dict[str, Any]] = None,
    stats: Optional[NormalizationStats] = None,
    state: Optional[TrainingState] = None,
) -> TrainingReport:
    """
    Run optimizer steps until ``optim_cfg.max_iter``.

    A checkpoint is written every ``checkpoint_every`` steps and after the last one when
    ``checkpoint_dir`` is given (for ``max_iter = 0`` that is the initial state).

    :raises NonFiniteException: the loss became NaN or infinite
    :raises TrainingException: a frozen parameter changed
    """
    state = state or TrainingState(
        SGD(model, optim_cfg),
        CenterBank.zeros(model.num_classes, model.feature_dim, loss_cfg.alpha),
    )
    if resume is not None:
        if resume.config_digest != config_digest:
            logger.warning("Resuming from a checkpoint written with a different configuration")
        restore_checkpoint(model, state, resume)
        logger.info(f"Resumed at iteration {state.iteration}")

    frozen_before = {n: p.data.copy() for n, p in model.named_parameters() if not p.trainable}
    sampler = EpochSampler(len(dataset), optim_cfg.batch_size, seed)
    meta = dict(metadata or {})
    meta.setdefault("seed", seed)
    out_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    report = TrainingReport(start_iteration=state.iteration, final_iteration=state.iteration)

    def checkpoint() -> None:
        if out_dir is None:
            return
        ckpt = collect_checkpoint(model, state, config_digest, meta, stats)
        path = save_checkpoint(ckpt, out_dir / checkpoint_name(state.iteration))
        report.checkpoints.append(str(path))
        report.checkpoint_path = str(path)

    try:
        for sink in sinks:
            sink.on_start(state.iteration)
        while state.iteration < optim_cfg.max_iter:
            it = state.iteration
            lr = lr_at(it, optim_cfg)
            batch = dataset.batch(sampler.indices(it))
            model.zero_grad()
            with Tape() as tape:
                logits, features = model.forward(Tensor(batch.x), mode="train")
                ls = softmax_cross_entropy(logits, batch.labels)
                reduction = loss_cfg.center_reduction
                lc = center_loss(features, batch.labels, state.centers, reduction)  # type: ignore[arg-type]
                loss = joint_loss(ls, lc, loss_cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise non_finite_loss_exception(it, lr, batch.ids)
            backward(tape, loss)
            state.optimizer.step(lr)
            state.centers.update(features.data, batch.labels)
            state.iteration = it + 1

            record = StepRecord(state.iteration, value, ls.item(), lc.item(), lr)
            report.loss.append(record.loss)
            report.ls.append(record.ls)
            report.lc.append(record.lc)
            report.lr.append(lr)
            for sink in sinks:
                sink.on_step(record)
            if state.iteration % optim_cfg.log_every == 0:
                logger.info(
                    f"iter {state.iteration}/{optim_cfg.max_iter} loss {value:.4f} "
                    f"(ls {record.ls:.4f}, lc {record.lc:.4f}) lr {lr:g}"
                )
            if optim_cfg.checkpoint_every and state.iteration % optim_cfg.checkpoint_every == 0:
                checkpoint()
        report.final_iteration = state.iteration
        if out_dir is not None and report.checkpoint_path != str(out_dir / checkpoint_name(state.iteration)):
            checkpoint()
    finally:
        for sink in sinks:
            sink.close()

    changed = [n for n, before in frozen_before.items() if not np.array_equal(before, model.parameter(n).data)]
    if changed:
        raise TrainingException(
            f"{len(changed)} frozen parameters changed during training, e.g. {changed[0]} ({record_of(changed[0])})"
        )
    return report
