"""
Tests for the architecture plan, the DenseNet-BC model and weight import/export.
"""

import numpy as np
import pytest

from lesionnet.datapipe import ArrayDataset
from lesionnet.exceptions import ConfigValidationException, InvalidArgumentException, ShapeMismatchException
from lesionnet.losses import LossConfig
from lesionnet.model import (
    ArchConfig,
    DenseNet,
    build,
    dense_layer_name,
    export_weights,
    import_weights,
    plan_architecture,
    record_of,
    reinitialize_trainable,
)
from lesionnet.tensor import Tensor
from lesionnet.trainer import Checkpoint, OptimizerConfig, train


def _input(arch: ArchConfig, n: int = 2, seed: int = 0) -> Tensor:
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(size=(n, arch.in_channels, arch.input_size, arch.input_size)).astype(np.float32))


def test_default_plan():
    """The default three-block network has 61 convolutions and 608 features."""
    plan = plan_architecture(ArchConfig())
    assert plan.conv_layer_count() == 61
    assert plan.feature_dim == 608
    names = [r.name for r in plan]
    assert names[0] == "conv1"
    assert names[-2:] == ["pool5", "fc"]
    assert "transition_2" in names and "transition_3" not in names
    assert plan.record("concat_4_11").out_channels == 608
    assert plan.record("fc").out_channels == 7


def test_four_block_plan_matches_densenet121():
    """Block sizes 6, 12, 24, 16 reproduce the 1024-wide DenseNet-121 features."""
    plan = plan_architecture(ArchConfig(block_sizes=(6, 12, 24, 16), freeze_boundary=None))
    assert plan.feature_dim == 1024
    assert plan.conv_layer_count() == 120


def test_channel_bookkeeping():
    """Dense layers add k channels; transitions compress by theta."""
    plan = plan_architecture(ArchConfig())
    assert plan.record("conv1").out_channels == 64
    assert plan.record("concat_2_1").in_channels == 64
    assert plan.record("concat_2_6").out_channels == 256
    assert plan.record("transition_1").out_channels == 128
    assert plan.record("transition_2").in_channels == 512
    assert plan.record("transition_2").out_channels == 256
    for prev, cur in zip(plan.records, plan.records[1:]):
        assert prev.out_channels == cur.in_channels


def test_freeze_boundary_marks_trainable_suffix():
    """Records before concat_4_6 are frozen, the rest trainable."""
    plan = plan_architecture(ArchConfig())
    boundary = plan.index(dense_layer_name(3, 6))
    assert plan.records[boundary].name == "concat_4_6"
    assert not any(r.trainable for r in plan.records[:boundary])
    assert all(r.trainable for r in plan.records[boundary:])
    assert plan.summary()["trainable_records"] == len(plan) - boundary
    assert "concat_4_6" in plan.table()


def test_spatial_underflow_is_rejected():
    """An input too small for the transitions fails the plan."""
    with pytest.raises(InvalidArgumentException):
        plan_architecture(ArchConfig(input_size=8))


def test_invalid_config_reports_all_problems():
    """Every invalid field is listed."""
    with pytest.raises(ConfigValidationException) as info:
        ArchConfig(growth_rate=0, compression=2.0)
    assert len(info.value.problems) >= 2
    with pytest.raises(ConfigValidationException):
        ArchConfig(freeze_boundary=(4, 1))


def test_forward_shapes(tiny_arch, tiny_model):
    """Logits are N×C and features N×d."""
    logits, features = tiny_model.forward(_input(tiny_arch), mode="eval")
    assert logits.shape == (2, 7)
    assert features.shape == (2, tiny_model.feature_dim)
    assert tiny_model.feature_dim == plan_architecture(tiny_arch).feature_dim


def test_forward_rejects_wrong_input(tiny_model):
    """Inputs must be N×3×S×S."""
    with pytest.raises(ShapeMismatchException):
        tiny_model.forward(Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32)))
    with pytest.raises(InvalidArgumentException):
        tiny_model.forward(Tensor(np.zeros((1, 3, 32, 32), dtype=np.float32)), mode="test")  # type: ignore[arg-type]


def test_dense_connectivity(tiny_arch, tiny_model):
    """A dense layer's output starts with its input, unchanged."""
    trace = {}
    tiny_model.forward(_input(tiny_arch), mode="eval", trace=trace)
    stem = tiny_arch.stem_channels
    np.testing.assert_array_equal(trace["concat_2_1"].data[:, :stem], trace["conv1"].data)
    assert trace["concat_2_1"].shape[1] == stem + tiny_arch.growth_rate


def test_hook_replaces_new_channels(tiny_arch, tiny_model):
    """A dense-layer hook sees and replaces only the k channels that layer adds."""
    seen = []

    def zero(t: Tensor) -> Tensor:
        seen.append(t.shape)
        return Tensor(np.zeros_like(t.data))

    trace = {}
    tiny_model.forward(_input(tiny_arch), mode="eval", trace=trace, hooks={"concat_2_1": zero})
    stem = tiny_arch.stem_channels
    assert seen[0][1] == tiny_arch.growth_rate
    assert not trace["concat_2_1"].data[:, stem:].any()


def test_eval_mode_is_deterministic_and_stateless(tiny_arch, tiny_model):
    """Inference gives identical outputs and leaves running statistics alone."""
    x = _input(tiny_arch)
    before = {n: b.copy() for n, b in tiny_model.named_buffers()}
    a, _ = tiny_model.forward(x, mode="eval")
    b, _ = tiny_model.forward(x, mode="eval")
    np.testing.assert_array_equal(a.data, b.data)
    for name, value in tiny_model.named_buffers():
        np.testing.assert_array_equal(value, before[name])


def test_training_mode_updates_running_stats(tiny_arch, tiny_model):
    """A training-mode forward moves the running statistics of trainable layers."""
    before = tiny_model.buffer("pool5.bn.running_mean").copy()
    tiny_model.forward(_input(tiny_arch), mode="train")
    assert not np.array_equal(before, tiny_model.buffer("pool5.bn.running_mean"))


def test_frozen_parameters(frozen_arch):
    """Parameters before the boundary are frozen and never require gradients."""
    model = DenseNet(frozen_arch, seed=0)
    assert not model.parameter("conv1.conv.weight").trainable
    assert not model.parameter("transition_1.bn.gamma").requires_grad
    assert model.parameter("concat_3_1.conv1.weight").trainable
    assert model.parameter("fc.weight").trainable
    assert all(record_of(n) in ("concat_3_1", "concat_3_2", "pool5", "fc") for n in model.trainable_names())


def test_training_leaves_frozen_layers_untouched(frozen_arch, image_dataset):
    """Frozen weights and their BatchNorm statistics survive training bit for bit."""
    model = DenseNet(frozen_arch, seed=0)
    frozen = {n: p.data.copy() for n, p in model.named_parameters() if not p.trainable}
    frozen_stats = model.buffer("conv1.bn.running_mean").copy()
    fc_before = model.parameter("fc.weight").data.copy()
    optim = OptimizerConfig(max_iter=2, batch_size=4, checkpoint_every=0)
    train(model, image_dataset, LossConfig(), optim, seed=0)
    for name, value in frozen.items():
        np.testing.assert_array_equal(model.parameter(name).data, value)
    np.testing.assert_array_equal(model.buffer("conv1.bn.running_mean"), frozen_stats)
    assert not np.array_equal(model.parameter("fc.weight").data, fc_before)


def test_build_is_deterministic(tiny_arch):
    """The same seed gives the same weights; parameter counts add up per record."""
    plan, a = build(tiny_arch, seed=3)
    _, b = build(tiny_arch, seed=3)
    _, c = build(tiny_arch, seed=4)
    assert len(plan) == len(a.plan)
    np.testing.assert_array_equal(a.parameter("conv1.conv.weight").data, b.parameter("conv1.conv.weight").data)
    assert not np.array_equal(a.parameter("conv1.conv.weight").data, c.parameter("conv1.conv.weight").data)
    assert sum(a.record_parameter_counts().values()) == a.parameter_count()


def test_export_import_round_trip(tiny_arch):
    """Imported weights reproduce the source model's outputs."""
    source = DenseNet(tiny_arch, seed=0)
    target = DenseNet(tiny_arch, seed=1)
    report = import_weights(target, export_weights(source))
    assert len(report.matched) == len(source.state_arrays())
    assert report.skipped == [] and report.mismatched == []
    x = _input(tiny_arch)
    np.testing.assert_array_equal(source.forward(x, mode="eval")[0].data, target.forward(x, mode="eval")[0].data)


def test_import_shape_mismatch(tiny_arch):
    """Strict import fails without touching the model; lenient import skips the tensor."""
    model = DenseNet(tiny_arch, seed=0)
    checkpoint = export_weights(DenseNet(tiny_arch, seed=1))
    checkpoint.put("fc.weight", np.zeros((3, 3)))
    conv_before = model.parameter("conv1.conv.weight").data.copy()
    with pytest.raises(ShapeMismatchException):
        import_weights(model, checkpoint, strict=True)
    np.testing.assert_array_equal(model.parameter("conv1.conv.weight").data, conv_before)

    report = import_weights(model, checkpoint, strict=False)
    assert len(report.mismatched) == 1 and report.mismatched[0].startswith("fc.weight")
    assert "fc.weight" not in report.matched
    np.testing.assert_array_equal(model.parameter("conv1.conv.weight").data, checkpoint.get("conv1.conv.weight"))


def test_import_name_map_and_skipped_names(tiny_arch):
    """Prefix renames are applied; unknown names are reported as skipped."""
    model = DenseNet(tiny_arch, seed=0)
    checkpoint = Checkpoint()
    checkpoint.put("classifier.weight", np.ones((7, model.feature_dim)))
    checkpoint.put("classifier.bias", np.full(7, 0.5))
    checkpoint.put("features.unknown", np.zeros(2))
    report = import_weights(model, checkpoint, name_map={"classifier": "fc"})
    assert sorted(report.matched) == ["fc.bias", "fc.weight"]
    assert report.skipped == ["features.unknown"]
    np.testing.assert_array_equal(model.parameter("fc.bias").data, np.full(7, 0.5, dtype=np.float32))


def test_import_name_map_prefers_the_longest_prefix(tiny_arch):
    """Overlapping prefix renames resolve to the most specific one."""
    model = DenseNet(tiny_arch, seed=0)
    checkpoint = Checkpoint()
    checkpoint.put("net.classifier.bias", np.full(7, 0.25))
    checkpoint.put("net.conv.weight", np.ones(model.parameter("conv1.conv.weight").shape))
    report = import_weights(model, checkpoint, name_map={"net": "conv1", "net.classifier": "fc"})
    assert sorted(report.matched) == ["conv1.conv.weight", "fc.bias"]
    assert report.skipped == []
    np.testing.assert_array_equal(model.parameter("fc.bias").data, np.full(7, 0.25, dtype=np.float32))


def test_reinitialize_trainable(frozen_arch):
    """Trainable records are re-drawn; frozen records keep the imported weights."""
    source = DenseNet(frozen_arch, seed=0)
    model = DenseNet(frozen_arch, seed=1)
    import_weights(model, export_weights(source))
    model.buffer("pool5.bn.running_var")[...] = 3.0
    reinitialize_trainable(model, seed=9)
    np.testing.assert_array_equal(model.parameter("conv1.conv.weight").data, source.parameter("conv1.conv.weight").data)
    assert not np.array_equal(
        model.parameter("concat_3_1.conv1.weight").data, source.parameter("concat_3_1.conv1.weight").data
    )
    np.testing.assert_array_equal(model.parameter("pool5.bn.gamma").data, 1.0)
    np.testing.assert_array_equal(model.parameter("fc.bias").data, 0.0)
    np.testing.assert_array_equal(model.buffer("pool5.bn.running_var"), 1.0)


def test_reinitialize_needs_boundary(tiny_model):
    """Without a freeze boundary there is nothing to re-initialize."""
    with pytest.raises(InvalidArgumentException):
        reinitialize_trainable(tiny_model, seed=0)


def test_dataset_fixture_matches_tiny_arch(tiny_arch, image_dataset):
    """The shared dataset fits the tiny architecture."""
    assert isinstance(image_dataset, ArrayDataset)
    assert image_dataset.x.shape[1:] == (tiny_arch.in_channels, tiny_arch.input_size, tiny_arch.input_size)


if __name__ == "__main__":
    pytest.main([__file__])
