"""
Tests for the learning-rate schedule, SGD, the epoch sampler and the training loop.
"""

from pathlib import Path

import numpy as np
import pytest

from lesionnet.exceptions import (
    ConfigValidationException,
    InvalidArgumentException,
    NonFiniteException,
    TrainingException,
)
from lesionnet.losses import LossConfig, softmax_cross_entropy
from lesionnet.model import DenseNet
from lesionnet.nn import Parameter
from lesionnet.tensor import Tape, Tensor, backward
from lesionnet.trainer import (
    LOG_HEADER,
    SGD,
    EpochSampler,
    MemorySink,
    OptimizerConfig,
    StepRecord,
    TrainingLogWriter,
    load_checkpoint,
    lr_at,
    sgd_step,
    train,
)


def test_step_schedule():
    """The learning rate drops by ten every 20000 iterations."""
    cfg = OptimizerConfig()
    assert [lr_at(k * 20000, cfg) for k in range(4)] == [0.01, 0.001, 1e-4, 1e-5]
    assert lr_at(19999, cfg) == 0.01
    assert lr_at(74999, cfg) == 1e-5
    assert cfg.lr_drops() == 3
    with pytest.raises(InvalidArgumentException):
        lr_at(75000, cfg)


def test_optimizer_config_validation():
    """All invalid values are reported at once."""
    with pytest.raises(ConfigValidationException) as info:
        OptimizerConfig(momentum=1.0, batch_size=0, lr_factor=1.5)
    assert len(info.value.problems) == 3


def test_sgd_step_with_momentum_and_weight_decay():
    """g = grad + wd·p; buf = μ·buf + g; p −= lr·buf."""
    p = Parameter(np.array([1.0]), dtype=np.float64)
    cfg = OptimizerConfig(momentum=0.9, weight_decay=0.1)
    buffers = {}
    grads = {"w": np.array([0.5])}
    sgd_step({"w": p}, grads, buffers, 0.1, cfg)
    assert p.data[0] == pytest.approx(0.94)
    sgd_step({"w": p}, grads, buffers, 0.1, cfg)
    assert buffers["w"][0] == pytest.approx(0.9 * 0.6 + 0.5 + 0.1 * 0.94)
    assert p.data[0] == pytest.approx(0.8266)


def test_sgd_step_requires_gradients():
    """A trainable parameter without a gradient is an error."""
    p = Parameter(np.ones(2))
    with pytest.raises(InvalidArgumentException):
        sgd_step({"w": p}, {"w": None}, {}, 0.1, OptimizerConfig())


def test_sgd_only_updates_trainable_parameters(frozen_arch):
    """The optimizer state covers trainable parameters only."""
    model = DenseNet(frozen_arch, seed=0)
    optimizer = SGD(model, OptimizerConfig())
    assert set(optimizer.params()) == set(model.trainable_names())
    assert "conv1.conv.weight" not in optimizer.params()


def test_sampler_is_a_function_of_the_step():
    """The same seed and step always give the same batch."""
    a = EpochSampler(10, 4, seed=3)
    b = EpochSampler(10, 4, seed=3)
    for step in (0, 1, 2, 5, 1, 0):
        np.testing.assert_array_equal(a.indices(step), b.indices(step))
    assert not np.array_equal(EpochSampler(10, 4, seed=4).permutation(0), a.permutation(0))


def test_sampler_epochs_drop_the_tail():
    """Batches of one epoch are disjoint and the partial tail batch is dropped."""
    sampler = EpochSampler(10, 4, seed=0)
    assert sampler.steps_per_epoch == 2
    first, second = sampler.indices(0), sampler.indices(1)
    assert len(first) == len(second) == 4
    assert not set(first) & set(second)
    np.testing.assert_array_equal(sampler.indices(2), sampler.permutation(1)[:4])
    with pytest.raises(InvalidArgumentException):
        EpochSampler(0, 4, seed=0)


def test_training_reduces_loss_on_a_fixed_batch(tiny_arch, image_dataset):
    """Repeated steps on a tiny dataset lower the objective."""
    model = DenseNet(tiny_arch, seed=0)
    optim = OptimizerConfig(max_iter=30, batch_size=14, checkpoint_every=0, weight_decay=0.0)
    report = train(model, image_dataset, LossConfig(lambda_=0.0), optim, seed=0)
    assert report.steps == 30
    assert len(report.loss) == 30
    assert report.loss[-1] < report.loss[0]
    assert report.lc[0] >= 0.0


def test_lambda_zero_is_plain_softmax_training(tiny_arch, image_dataset):
    """With λ = 0 the trained model is bit-identical to one trained on the softmax loss alone."""
    optim = OptimizerConfig(max_iter=4, batch_size=4, checkpoint_every=0)
    joint = DenseNet(tiny_arch, seed=0)
    report = train(joint, image_dataset, LossConfig(lambda_=0.0), optim, seed=2)

    plain = DenseNet(tiny_arch, seed=0)
    sgd = SGD(plain, optim)
    sampler = EpochSampler(len(image_dataset), optim.batch_size, seed=2)
    losses = []
    for it in range(optim.max_iter):
        batch = image_dataset.batch(sampler.indices(it))
        plain.zero_grad()
        with Tape() as tape:
            logits, _ = plain.forward(Tensor(batch.x), mode="train")
            ls = softmax_cross_entropy(logits, batch.labels)
        backward(tape, ls)
        sgd.step(lr_at(it, optim))
        losses.append(ls.item())

    assert report.loss == losses
    plain_state = plain.state_arrays()
    for name, value in joint.state_arrays().items():
        np.testing.assert_array_equal(value, plain_state[name], err_msg=name)


def test_log_writer(tmp_path, tiny_arch, image_dataset):
    """The log has a header line and one iter,loss,ls,lc,lr line per step."""
    log = tmp_path / "train.log"
    memory = MemorySink()
    optim = OptimizerConfig(max_iter=5, batch_size=4, checkpoint_every=0)
    train(DenseNet(tiny_arch, seed=0), image_dataset, LossConfig(), optim, sinks=[TrainingLogWriter(log), memory])
    lines = log.read_text().splitlines()
    assert lines[0] == f"# {LOG_HEADER}"
    assert len(lines) == 6
    fields = lines[1].split(",")
    assert fields[0] == "1"
    assert len(fields) == 5
    assert float(fields[1]) == pytest.approx(float(fields[2]) + 0.8 * float(fields[3]), rel=1e-4)
    assert float(fields[4]) == pytest.approx(0.01)
    assert [r.iteration for r in memory.records] == [1, 2, 3, 4, 5]


def test_log_writer_rewrites_up_to_the_start_iteration(tmp_path):
    """A fresh start replaces the log; a later start keeps the steps before it."""
    log = tmp_path / "logs" / "train.log"

    def run(start: int, stop: int) -> None:
        writer = TrainingLogWriter(log)
        writer.on_start(start)
        for it in range(start + 1, stop + 1):
            writer.on_step(StepRecord(it, float(it), 0.5, 0.25, 0.01))
        writer.close()

    run(0, 4)
    full = log.read_text()
    run(0, 4)
    assert log.read_text() == full
    run(0, 2)
    assert len(log.read_text().splitlines()) == 3
    run(2, 4)
    assert log.read_text() == full
    run(1, 4)
    assert log.read_text() == full


def test_checkpoints_are_written_on_schedule(tmp_path, tiny_arch, image_dataset):
    """Checkpoints land every checkpoint_every steps and after the last one."""
    optim = OptimizerConfig(max_iter=5, batch_size=4, checkpoint_every=2)
    report = train(DenseNet(tiny_arch, seed=0), image_dataset, LossConfig(), optim, checkpoint_dir=tmp_path)
    names = [Path(p).name for p in report.checkpoints]
    assert names == ["iter_0000002.dckp", "iter_0000004.dckp", "iter_0000005.dckp"]
    final = load_checkpoint(report.checkpoint_path)
    assert final.iteration == 5
    assert "center_6" in final
    assert any(n.startswith("momentum.") for n in final.tensors)
    assert final.metadata["seed"] == 0


def test_resume_reproduces_uninterrupted_run(tmp_path, tiny_arch, image_dataset):
    """Stopping at step 3 and resuming gives a bit-identical step-6 checkpoint."""
    loss_cfg = LossConfig()
    full_cfg = OptimizerConfig(max_iter=6, batch_size=4, checkpoint_every=3)
    full = train(DenseNet(tiny_arch, seed=0), image_dataset, loss_cfg, full_cfg, seed=5, checkpoint_dir=tmp_path / "a")

    first_half = OptimizerConfig(max_iter=3, batch_size=4, checkpoint_every=3)
    half = train(
        DenseNet(tiny_arch, seed=0), image_dataset, loss_cfg, first_half, seed=5, checkpoint_dir=tmp_path / "b"
    )
    resumed = train(
        DenseNet(tiny_arch, seed=0),
        image_dataset,
        loss_cfg,
        full_cfg,
        seed=5,
        checkpoint_dir=tmp_path / "b",
        resume=load_checkpoint(half.checkpoint_path),
    )
    assert resumed.start_iteration == 3
    assert resumed.loss == full.loss[3:]
    assert load_checkpoint(resumed.checkpoint_path).digest() == load_checkpoint(full.checkpoint_path).digest()


class _TamperingSink:
    """Moves a frozen parameter after every step."""

    def __init__(self, model: DenseNet, name: str):
        self.model = model
        self.name = name

    def on_start(self, iteration: int) -> None:
        pass

    def on_step(self, record: StepRecord) -> None:
        self.model.parameter(self.name).data += 1.0

    def close(self) -> None:
        pass


def test_changed_frozen_parameter_fails_the_run(frozen_arch, image_dataset):
    """Training refuses to finish when a frozen parameter moved."""
    optim = OptimizerConfig(max_iter=2, batch_size=4, checkpoint_every=0)
    train(DenseNet(frozen_arch, seed=0), image_dataset, LossConfig(), optim)

    model = DenseNet(frozen_arch, seed=0)
    sink = _TamperingSink(model, "conv1.conv.weight")
    with pytest.raises(TrainingException, match="conv1.conv.weight"):
        train(model, image_dataset, LossConfig(), optim, sinks=[sink])


def test_non_finite_loss_stops_training(tiny_model, image_dataset):
    """A NaN classifier bias makes the loss non-finite and aborts with the batch ids."""
    tiny_model.parameter("fc.bias").data[...] = np.nan
    optim = OptimizerConfig(max_iter=2, batch_size=4, checkpoint_every=0)
    with np.errstate(all="ignore"), pytest.raises(NonFiniteException) as info:
        train(tiny_model, image_dataset, LossConfig(), optim)
    assert "iteration 0" in str(info.value)
    assert "sample_" in str(info.value)


if __name__ == "__main__":
    pytest.main([__file__])
