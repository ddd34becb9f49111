"""
Declarative description of the reduced DenseNet-BC and its realized layer plan.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

from attrs import Factory, define, field

from ..exceptions import ConfigValidationException, InvalidArgumentException, LesionNetException
from ..nn.layers import conv_output_size

LayerKind = Literal["stem", "bottleneck", "transition", "global_pool", "classifier"]

STEM_KERNEL, STEM_STRIDE, STEM_PADDING = 7, 2, 3
STEM_POOL_KERNEL, STEM_POOL_STRIDE, STEM_POOL_PADDING = 3, 2, 1


def _as_int_tuple(value) -> Tuple[int, ...]:
    return tuple(int(v) for v in value)


def _as_boundary(value) -> Optional[Tuple[int, int]]:
    if value is None:
        return None
    b, j = value
    return int(b), int(j)


@define(frozen=True)
class ArchConfig:
    """Architecture of a DenseNet-BC with a configurable number of dense blocks."""

    block_sizes: Tuple[int, ...] = field(
        default=(6, 12, 11),
        converter=_as_int_tuple,
        metadata={"help": "bottleneck layers per dense block"},
    )
    growth_rate: int = field(default=32, metadata={"help": "channels added by each dense layer (k)"})
    compression: float = field(default=0.5, metadata={"help": "transition compression theta"})
    stem_channels: int = field(
        default=Factory(lambda self: 2 * self.growth_rate, takes_self=True),
        metadata={"help": "stem convolution output channels (default 2k)"},
    )
    num_classes: int = field(default=7, metadata={"help": "number of output classes"})
    input_size: int = field(default=224, metadata={"help": "square input side in pixels"})
    in_channels: int = field(default=3, metadata={"help": "input image channels"})
    bottleneck_factor: int = field(default=4, metadata={"help": "1x1 bottleneck width as a multiple of k"})
    freeze_boundary: Optional[Tuple[int, int]] = field(
        default=(3, 6),
        converter=_as_boundary,
        metadata={"help": "(block, layer) of the first trainable dense layer; none trains everything"},
    )

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        problems = []
        if not 1 <= len(self.block_sizes) <= 4:
            problems.append(f"arch.block_sizes must hold 1 to 4 blocks, got {len(self.block_sizes)}")
        if any(n < 1 for n in self.block_sizes):
            problems.append(f"arch.block_sizes entries must be positive, got {self.block_sizes}")
        for key in ("growth_rate", "stem_channels", "num_classes", "input_size", "in_channels", "bottleneck_factor"):
            if getattr(self, key) < 1:
                problems.append(f"arch.{key} must be >= 1, got {getattr(self, key)}")
        if not 0.0 < self.compression <= 1.0:
            problems.append(f"arch.compression must be in (0, 1], got {self.compression}")
        if self.freeze_boundary is not None:
            b, j = self.freeze_boundary
            if not 1 <= b <= len(self.block_sizes) or not 1 <= j <= self.block_sizes[b - 1]:
                problems.append(
                    f"arch.freeze_boundary {self.freeze_boundary} names no dense layer of blocks {self.block_sizes}"
                )
        return problems


def dense_layer_name(block: int, layer: int) -> str:
    """Name of the concatenation emitted by dense ``layer`` of ``block`` (both 1-based)."""
    return f"concat_{block + 1}_{layer}"


@dataclass(frozen=True)
class LayerRecord:
    """One named layer of the realized architecture."""

    name: str
    kind: LayerKind
    in_channels: int
    out_channels: int
    trainable: bool
    conv_layers: int
    """Convolutions inside the record."""
    spatial_in: int
    spatial_out: int
    block: Optional[int] = None
    """1-based dense block for bottleneck records."""


@dataclass(frozen=True)
class LayerPlan:
    """Ordered named-layer sequence realized from an :class:`ArchConfig`."""

    config: ArchConfig
    records: Tuple[LayerRecord, ...]

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, name: str) -> LayerRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, r in enumerate(self.records):
            if r.name == name:
                return i
        raise KeyError(name)

    def conv_layer_count(self) -> int:
        return sum(r.conv_layers for r in self.records)

    @property
    def feature_dim(self) -> int:
        """Width of the pool5 feature vector, i.e. the classifier input."""
        return self.record("pool5").out_channels

    def spatial_trace(self) -> List[Tuple[str, int]]:
        return [(r.name, r.spatial_out) for r in self.records]

    def block_records(self, block: int) -> List[LayerRecord]:
        return [r for r in self.records if r.block == block]

    def table(self) -> str:
        """Plain-text table: name, kind, in_ch, out_ch, trainable."""
        width = max(len(r.name) for r in self.records)
        lines = [f"{'name':<{width}}  {'kind':<11}  {'in_ch':>6}  {'out_ch':>6}  trainable"]
        for r in self.records:
            lines.append(
                f"{r.name:<{width}}  {r.kind:<11}  {r.in_channels:>6}  {r.out_channels:>6}  {str(r.trainable).lower()}"
            )
        return "\n".join(lines)

    def summary(self) -> Dict[str, int]:
        return {
            "conv_layers": self.conv_layer_count(),
            "feature_dim": self.feature_dim,
            "records": len(self.records),
            "trainable_records": sum(r.trainable for r in self.records),
        }


def plan_architecture(config: ArchConfig) -> LayerPlan:
    """
    Realize the named layer sequence: stem, dense blocks separated by transitions,
    pool5 (final BN-ReLU + global average pooling) and the fc classifier.
    """
    k = config.growth_rate
    entries: List[dict] = []

    size = config.input_size
    conv_size = conv_output_size(size, STEM_KERNEL, STEM_STRIDE, STEM_PADDING)
    pooled = conv_output_size(conv_size, STEM_POOL_KERNEL, STEM_POOL_STRIDE, STEM_POOL_PADDING) if conv_size >= 1 else 0
    if pooled < 1:
        raise InvalidArgumentException(
            f"spatial size underflow: input {size} too small for the stem"
        )
    channels = config.stem_channels
    entries.append(
        dict(name="conv1", kind="stem", in_channels=config.in_channels, out_channels=channels,
             conv_layers=1, spatial_in=size, spatial_out=pooled)
    )
    size = pooled

    num_blocks = len(config.block_sizes)
    for b, layers in enumerate(config.block_sizes, start=1):
        for j in range(1, layers + 1):
            entries.append(
                dict(name=dense_layer_name(b, j), kind="bottleneck", in_channels=channels,
                     out_channels=channels + k, conv_layers=2, spatial_in=size, spatial_out=size, block=b)
            )
            channels += k
        if b < num_blocks:
            if size < 2 or size % 2:
                raise InvalidArgumentException(
                    f"spatial size underflow: transition_{b} needs an even size >= 2, got {size}"
                )
            out = math.floor(config.compression * channels)
            if out < 1:
                raise InvalidArgumentException(f"transition_{b} compresses {channels} channels to zero")
            entries.append(
                dict(name=f"transition_{b}", kind="transition", in_channels=channels, out_channels=out,
                     conv_layers=1, spatial_in=size, spatial_out=size // 2)
            )
            channels = out
            size //= 2

    entries.append(
        dict(name="pool5", kind="global_pool", in_channels=channels, out_channels=channels,
             conv_layers=0, spatial_in=size, spatial_out=1)
    )
    entries.append(
        dict(name="fc", kind="classifier", in_channels=channels, out_channels=config.num_classes,
             conv_layers=0, spatial_in=1, spatial_out=1)
    )

    first_trainable = 0
    if config.freeze_boundary is not None:
        boundary = dense_layer_name(*config.freeze_boundary)
        first_trainable = next(i for i, e in enumerate(entries) if e["name"] == boundary)

    records = tuple(LayerRecord(trainable=i >= first_trainable, **e) for i, e in enumerate(entries))
    for prev, cur in zip(records, records[1:]):
        if prev.out_channels != cur.in_channels:
            raise LesionNetException(
                f"channel bookkeeping broken between {prev.name} ({prev.out_channels}) "
                f"and {cur.name} ({cur.in_channels})"
            )
    return LayerPlan(config=config, records=records)
