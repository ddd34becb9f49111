"""
DenseNet-BC model: parameters laid out along a :class:`LayerPlan` and the forward pass.

Parameter names are ``<record>.<unit>.<tensor>``::

    conv1.conv.weight            conv1.bn.gamma / beta / running_mean / running_var
    concat_2_1.bn1.*  concat_2_1.conv1.weight  concat_2_1.bn2.*  concat_2_1.conv2.weight
    transition_1.bn.*  transition_1.conv.weight
    pool5.bn.*
    fc.weight  fc.bias

Running statistics are buffers; everything else is a :class:`Parameter`.
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from ..exceptions import InvalidArgumentException, ShapeMismatchException
from ..nn import (
    BatchNormParams,
    ConvParams,
    FeatureModel,
    Mode,
    Module,
    Parameter,
    avg_pool,
    batch_norm,
    check_mode,
    concat_channels,
    conv2d,
    conv_fan_in,
    global_avg_pool,
    he_init,
    linear,
    max_pool,
    relu,
)
from ..rng import derive_seed
from ..tensor import DEFAULT_DTYPE, Tensor
from .arch import (
    STEM_KERNEL,
    STEM_PADDING,
    STEM_POOL_KERNEL,
    STEM_POOL_PADDING,
    STEM_POOL_STRIDE,
    STEM_STRIDE,
    ArchConfig,
    LayerPlan,
    LayerRecord,
    plan_architecture,
)

if TYPE_CHECKING:
    from ..trainer.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

Hook = Callable[[Tensor], Tensor]

def record_of(tensor_name: str) -> str:
    """Plan record owning a parameter or buffer name."""
    return tensor_name.split(".", 1)[0]


class DenseNet(FeatureModel):
    """
    Reduced DenseNet-BC classifier.

    Frozen records (before the freeze boundary) hold non-trainable parameters and run
    their BatchNorm layers on running statistics in every mode.
    """

    def __init__(self, config: ArchConfig, seed: int = 0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.config = config
        self.plan = plan_architecture(config)
        self.dtype = np.dtype(dtype)
        self._trainable = {r.name: r.trainable for r in self.plan}

        k = config.growth_rate
        width = config.bottleneck_factor * k
        for r in self.plan:
            if r.kind == "stem":
                self._add_conv(f"{r.name}.conv", (r.out_channels, r.in_channels, STEM_KERNEL, STEM_KERNEL), seed)
                self._add_bn(f"{r.name}.bn", r.out_channels)
            elif r.kind == "bottleneck":
                self._add_bn(f"{r.name}.bn1", r.in_channels)
                self._add_conv(f"{r.name}.conv1", (width, r.in_channels, 1, 1), seed)
                self._add_bn(f"{r.name}.bn2", width)
                self._add_conv(f"{r.name}.conv2", (k, width, 3, 3), seed)
            elif r.kind == "transition":
                self._add_bn(f"{r.name}.bn", r.in_channels)
                self._add_conv(f"{r.name}.conv", (r.out_channels, r.in_channels, 1, 1), seed)
            elif r.kind == "global_pool":
                self._add_bn(f"{r.name}.bn", r.in_channels)
            else:
                self._add_param(
                    f"{r.name}.weight",
                    he_init((r.out_channels, r.in_channels), r.in_channels,
                            derive_seed(seed, "init", f"{r.name}.weight"), self.dtype).data,
                )
                self._add_param(f"{r.name}.bias", np.zeros(r.out_channels, dtype=self.dtype))

    def _add_param(self, name: str, data: np.ndarray) -> Parameter:
        return self.register_parameter(
            name, Parameter(data, trainable=self._trainable[record_of(name)], dtype=self.dtype)
        )

    def _add_conv(self, prefix: str, shape: Tuple[int, ...], seed: int) -> None:
        name = f"{prefix}.weight"
        w = he_init(shape, conv_fan_in(shape), derive_seed(seed, "init", name), self.dtype)
        self._add_param(name, w.data)

    def _add_bn(self, prefix: str, channels: int) -> None:
        self._add_param(f"{prefix}.gamma", np.ones(channels, dtype=self.dtype))
        self._add_param(f"{prefix}.beta", np.zeros(channels, dtype=self.dtype))
        self.register_buffer(f"{prefix}.running_mean", np.zeros(channels, dtype=self.dtype))
        self.register_buffer(f"{prefix}.running_var", np.ones(channels, dtype=self.dtype))

    def _bn(self, prefix: str, mode: Mode) -> BatchNormParams:
        effective: Mode = mode if self._trainable[record_of(prefix)] else "eval"
        return BatchNormParams(
            gamma=self.parameter(f"{prefix}.gamma"),
            beta=self.parameter(f"{prefix}.beta"),
            running_mean=self.buffer(f"{prefix}.running_mean"),
            running_var=self.buffer(f"{prefix}.running_var"),
            mode=effective,
        )

    def _conv(self, prefix: str, stride: int = 1, padding: int = 0) -> ConvParams:
        return ConvParams(self.parameter(f"{prefix}.weight"), stride=stride, padding=padding)

    def _bn_relu_conv(self, x: Tensor, bn: str, conv: str, mode: Mode, padding: int = 0) -> Tensor:
        return conv2d(relu(batch_norm(x, self._bn(bn, mode))), self._conv(conv, padding=padding))

    @property
    def feature_dim(self) -> int:
        return self.plan.feature_dim

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def is_trainable(self, record: str) -> bool:
        return self._trainable[record]

    def forward(
        self,
        x: Tensor,
        mode: Mode = "train",
        trace: Optional[Dict[str, Tensor]] = None,
        hooks: Optional[Mapping[str, Hook]] = None,
    ) -> Tuple[Tensor, Tensor]:
        """
        Run the network on an ``N×C×S×S`` batch.

        Returns ``(logits N×num_classes, pool5 features N×d)``. When ``trace`` is given it
        receives every record's output by name. ``hooks`` may replace a record's output; for
        a dense layer the hook sees only the ``k`` channels that layer adds, before they are
        concatenated to its input.
        """
        mode = check_mode(mode)
        cfg = self.config
        expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
        if x.ndim != 4 or x.shape[0] < 1 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatchException(
                f"forward expects N×{expected[0]}×{expected[1]}×{expected[2]} input, got shape {x.shape}"
            )
        hooks = hooks or {}

        def emit(name: str, value: Tensor) -> Tensor:
            if name in hooks:
                value = hooks[name](value)
            if trace is not None:
                trace[name] = value
            return value

        h = x
        features = logits = None
        for r in self.plan:
            if r.kind == "stem":
                h = conv2d(h, self._conv("conv1.conv", STEM_STRIDE, STEM_PADDING))
                h = relu(batch_norm(h, self._bn("conv1.bn", mode)))
                h = emit(r.name, max_pool(h, STEM_POOL_KERNEL, STEM_POOL_STRIDE, STEM_POOL_PADDING))
            elif r.kind == "bottleneck":
                mid = self._bn_relu_conv(h, f"{r.name}.bn1", f"{r.name}.conv1", mode)
                new = self._bn_relu_conv(mid, f"{r.name}.bn2", f"{r.name}.conv2", mode, padding=1)
                if r.name in hooks:
                    new = hooks[r.name](new)
                h = concat_channels([h, new])
                if trace is not None:
                    trace[r.name] = h
            elif r.kind == "transition":
                h = self._bn_relu_conv(h, f"{r.name}.bn", f"{r.name}.conv", mode)
                h = emit(r.name, avg_pool(h))
            elif r.kind == "global_pool":
                features = emit(r.name, global_avg_pool(relu(batch_norm(h, self._bn("pool5.bn", mode)))))
            else:
                logits = emit(r.name, linear(features, self.parameter("fc.weight"), self.parameter("fc.bias")))
        return logits, features

    __call__ = forward

    def record_parameter_counts(self) -> Dict[str, int]:
        """Learnable scalars per plan record (running statistics excluded)."""
        counts = {r.name: 0 for r in self.plan}
        for name, p in self.named_parameters():
            counts[record_of(name)] += p.size
        return counts

    def trainable_names(self) -> List[str]:
        return [n for n, _ in self.trainable_parameters()]


def build(config: ArchConfig, seed: int = 0, dtype=DEFAULT_DTYPE) -> Tuple[LayerPlan, DenseNet]:
    """Realize ``config`` into its layer plan and a He-initialized model."""
    model = DenseNet(config, seed=seed, dtype=dtype)
    logger.debug(
        f"Built DenseNet: {model.plan.conv_layer_count()} conv layers, d={model.feature_dim}, "
        f"{model.parameter_count()} parameters ({model.parameter_count(trainable_only=True)} trainable)"
    )
    return model.plan, model


def export_weights(model: Module) -> "Checkpoint":
    """All parameters and running statistics of ``model`` as a checkpoint."""
    from ..trainer.checkpoint import Checkpoint

    checkpoint = Checkpoint()
    for name, value in model.state_arrays().items():
        checkpoint.put(name, value)
    return checkpoint


@dataclass_json
@dataclass
class ImportReport:
    """Outcome of :func:`import_weights`, listing model tensor names."""

    matched: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    """Checkpoint names with no counterpart in the model."""
    mismatched: List[str] = field(default_factory=list)
    """``name: checkpoint shape vs model shape`` entries (only when not strict)."""


def _map_name(name: str, name_map: Mapping[str, str]) -> str:
    """Rename by the whole name, else by the longest mapped dotted prefix."""
    if name in name_map:
        return name_map[name]
    parts = name.split(".")
    for cut in range(len(parts) - 1, 0, -1):
        head = ".".join(parts[:cut])
        if head in name_map:
            return ".".join([name_map[head], *parts[cut:]])
    return name


def import_weights(
    model: Module,
    checkpoint: "Checkpoint",
    name_map: Optional[Mapping[str, str]] = None,
    strict: bool = True,
) -> ImportReport:
    """
    Copy checkpoint tensors into ``model``.

    ``name_map`` renames checkpoint tensors, either whole names or leading dotted prefixes
    (``{"features.denseblock1.denselayer1": "concat_2_1"}``); unmapped names are used as they
    are. Every matched tensor is shape-checked before anything is copied, so a failed
    import leaves the model untouched. Unmatched model tensors keep their values.

    :raises ShapeMismatchException: on a shape mismatch when ``strict``
    """
    name_map = name_map or {}
    state = model.state_arrays()
    report = ImportReport()
    pending: List[Tuple[str, np.ndarray]] = []
    for ckpt_name, value in checkpoint.items():
        target = _map_name(ckpt_name, name_map)
        if target not in state:
            report.skipped.append(ckpt_name)
            continue
        if value.shape != state[target].shape:
            report.mismatched.append(f"{target}: {value.shape} vs {state[target].shape}")
            continue
        pending.append((target, value))

    if report.mismatched and strict:
        raise ShapeMismatchException("import_weights: " + "; ".join(report.mismatched))
    for target, value in pending:
        model.assign(target, value)
        report.matched.append(target)
    logger.info(
        f"Imported {len(report.matched)} tensors ({len(report.skipped)} skipped, "
        f"{len(report.mismatched)} mismatched)"
    )
    return report


def _reset_record(model: DenseNet, record: LayerRecord, seed: int) -> None:
    for name, p in model.named_parameters():
        if record_of(name) != record.name:
            continue
        if name.endswith(".gamma"):
            p.data[...] = 1
        elif name.endswith((".beta", ".bias")):
            p.data[...] = 0
        else:
            fresh = he_init(p.shape, conv_fan_in(p.shape), derive_seed(seed, "reinit", name), p.dtype)
            model.assign(name, fresh.data)
        p.zero_grad()
    for name, buf in model.named_buffers():
        if record_of(name) == record.name:
            buf[...] = 0 if name.endswith("running_mean") else 1


def reinitialize_trainable(model: DenseNet, seed: int) -> None:
    """Re-draw every trainable record (He init, BN reset); frozen records are untouched."""
    if model.config.freeze_boundary is None:
        raise InvalidArgumentException("reinitialize_trainable needs a freeze boundary")
    records = [r for r in model.plan if r.trainable]
    for r in records:
        _reset_record(model, r, seed)
    logger.info(f"Re-initialized {len(records)} trainable records from {records[0].name}")
