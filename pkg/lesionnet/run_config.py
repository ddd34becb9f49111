"""
Run configuration: every component config under one namespaced, flat text format.

File format::

    # comment
    arch.block_sizes = 6,12,11
    loss.lambda = 0.8
    run.seed = 7

Values given on the command line (``section.key=value``) override file values. Unknown keys
and invalid values are collected across all sections and reported together.
"""

import hashlib
import logging
import os
import typing
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type

import attrs
from attrs import define, field

from .exceptions import ConfigValidationException
from .losses import LossConfig
from .model.arch import ArchConfig
from .trainer.optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

TARGET_CHOICES = ("balanced", "none")
DTYPE_CHOICES = ("float32", "float64")


@define(frozen=True)
class DataConfig:
    """Dataset ingestion, split, balancing and loading."""

    manifest: str = field(default="", metadata={"help": "ground-truth file (image,MEL,NV,BCC,AKIEC,BKL,DF,VASC)"})
    image_dir: str = field(default="", metadata={"help": "directory of source images (default: next to the manifest)"})
    split_ratio: float = field(default=0.8, metadata={"help": "training share of every class, in (0, 1]"})
    targets: str = field(default="balanced", metadata={"help": "balancing targets: balanced or none"})
    output_size: int = field(
        default=0, metadata={"help": "crop and resize materialized images to this side (0 keeps them)"}
    )
    workers: int = field(default=1, metadata={"help": "worker threads for materialization and image loading"})
    norm_sample: int = field(
        default=0, metadata={"help": "training images used for normalization statistics (0 = all)"}
    )

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        problems = []
        if not 0.0 < self.split_ratio <= 1.0:
            problems.append(f"data.split_ratio must be in (0, 1], got {self.split_ratio}")
        if self.targets not in TARGET_CHOICES:
            problems.append(f"data.targets must be one of {', '.join(TARGET_CHOICES)}, got {self.targets!r}")
        if self.output_size < 0:
            problems.append(f"data.output_size must be >= 0, got {self.output_size}")
        if self.workers < 1:
            problems.append(f"data.workers must be >= 1, got {self.workers}")
        if self.norm_sample < 0:
            problems.append(f"data.norm_sample must be >= 0, got {self.norm_sample}")
        return problems


@define(frozen=True)
class PathsConfig:
    """Where every stage reads and writes."""

    work_dir: str = field(default="work", metadata={"help": "base directory of relative paths below"})
    split_file: str = field(default="split.csv", metadata={"help": "image_id,split file"})
    plan_file: str = field(default="plan.csv", metadata={"help": "augmentation plan file"})
    data_dir: str = field(default="data", metadata={"help": "materialized dataset directory"})
    checkpoint_dir: str = field(default="checkpoints", metadata={"help": "training checkpoint directory"})
    log_file: str = field(default="train.log", metadata={"help": "iter,loss,ls,lc,lr training log"})
    scores_file: str = field(default="scores.csv", metadata={"help": "per-image probability table"})
    metrics_file: str = field(default="metrics.txt", metadata={"help": "key=value metrics report"})

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        return [] if self.work_dir else ["paths.work_dir must not be empty"]

    def resolve(self, name: str) -> Path:
        value = Path(getattr(self, name))
        return value if name == "work_dir" or value.is_absolute() else Path(self.work_dir) / value


@define(frozen=True)
class RunSettings:
    """Global run settings."""

    seed: int = field(default=0, metadata={"help": "global seed; every stage derives a named stream from it"})
    dtype: str = field(default="float32", metadata={"help": "parameter and activation precision"})
    init_weights: str = field(default="", metadata={"help": "checkpoint to import before training"})
    reinitialize: bool = field(default=True, metadata={"help": "re-draw trainable layers after importing weights"})
    resume: str = field(default="", metadata={"help": "checkpoint to resume training from"})

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        problems = []
        if self.seed < 0:
            problems.append(f"run.seed must be >= 0, got {self.seed}")
        if self.dtype not in DTYPE_CHOICES:
            problems.append(f"run.dtype must be one of {', '.join(DTYPE_CHOICES)}, got {self.dtype!r}")
        return problems


SECTIONS: Dict[str, Type] = {
    "arch": ArchConfig,
    "loss": LossConfig,
    "optim": OptimizerConfig,
    "data": DataConfig,
    "paths": PathsConfig,
    "run": RunSettings,
}

# Where a run reads and writes, not what it computes; left out of the digest and metadata.
LOCATION_SECTIONS = ("paths",)
LOCATION_KEYS = ("run.resume",)


def key_of(attribute: attrs.Attribute) -> str:
    return attribute.name.rstrip("_")


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_tuple(text: str) -> Optional[Tuple[int, ...]]:
    text = text.strip().strip("[]()").strip()
    if text.lower() == "none":
        return None
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def parse_value(attribute: attrs.Attribute, text: str) -> Any:
    """Coerce ``text`` to the declared type of ``attribute``."""
    kind = attribute.type
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    text = text.strip()
    if origin is typing.Union and type(None) in args:
        if text.lower() == "none":
            return None
        kind = next(a for a in args if a is not type(None))
        origin = typing.get_origin(kind)
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected true or false, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if origin is tuple:
        return _parse_tuple(text)
    return text


class RunConfig:
    """
    The resolved configuration of one run.

    ``LESIONNET_CONFIG`` names the default config file; ``LESIONNET_DEBUG`` enables debug
    logging and per-operation finite checks.
    """

    @staticmethod
    def _config_path() -> Optional[str]:
        return os.getenv("LESIONNET_CONFIG") or None

    @staticmethod
    def _debug() -> bool:
        return os.getenv("LESIONNET_DEBUG", "false").lower() == "true"

    def __init__(
        self,
        arch: Optional[ArchConfig] = None,
        loss: Optional[LossConfig] = None,
        optim: Optional[OptimizerConfig] = None,
        data: Optional[DataConfig] = None,
        paths: Optional[PathsConfig] = None,
        run: Optional[RunSettings] = None,
    ):
        self.arch = arch or ArchConfig()
        self.loss = loss or LossConfig()
        self.optim = optim or OptimizerConfig()
        self.data = data or DataConfig()
        self.paths = paths or PathsConfig()
        self.run = run or RunSettings()
        self.source: Optional[str] = None

    @classmethod
    def from_values(cls, values: Mapping[str, str]) -> "RunConfig":
        """
        Build from ``section.key -> text`` pairs.

        :raises ConfigValidationException: unknown keys, unparsable or invalid values
        """
        problems: List[str] = []
        per_section: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
        for dotted, text in values.items():
            section, _, key = dotted.partition(".")
            if section not in SECTIONS or not key:
                problems.append(f"unknown key {dotted!r}")
                continue
            attribute = next((a for a in attrs.fields(SECTIONS[section]) if key_of(a) == key), None)
            if attribute is None:
                problems.append(f"unknown key {dotted!r}")
                continue
            try:
                per_section[section][attribute.name] = parse_value(attribute, text)
            except (TypeError, ValueError) as e:
                problems.append(f"{dotted}: {e}")

        built: Dict[str, Any] = {}
        for section, cls_ in SECTIONS.items():
            try:
                built[section] = cls_(**per_section[section])
            except ConfigValidationException as e:
                problems.extend(e.problems)
            except (TypeError, ValueError) as e:
                problems.append(f"{section}: {e}")
        if problems:
            raise ConfigValidationException(problems)
        return cls(**built)

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Sequence[str] = ()) -> "RunConfig":
        """
        Read ``path`` (or ``LESIONNET_CONFIG``) and apply ``section.key=value`` overrides.

        :raises ConfigValidationException: malformed lines, unknown keys or invalid values
        """
        path = path or cls._config_path()
        values: Dict[str, str] = {}
        problems: List[str] = []
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigValidationException([f"cannot read config file {path}: {e}"]) from e
            for line_no, line in enumerate(text.splitlines(), start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                key, sep, value = stripped.partition("=")
                if not sep or not key.strip():
                    problems.append(f"{path}:{line_no}: expected 'section.key = value', got {line.strip()!r}")
                    continue
                values[key.strip()] = value.strip()
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                problems.append(f"override {item!r} must look like section.key=value")
                continue
            values[key.strip()] = value.strip()
        if problems:
            raise ConfigValidationException(problems)
        config = cls.from_values(values)
        config.source = path
        logger.debug(f"Loaded configuration from {path or 'defaults'} with {len(overrides)} overrides")
        return config

    def sections(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in SECTIONS}

    def items(self) -> List[Tuple[str, str]]:
        """Every ``section.key`` with its effective value, in declaration order."""
        out = []
        for name, instance in self.sections().items():
            for attribute in attrs.fields(type(instance)):
                out.append((f"{name}.{key_of(attribute)}", format_value(getattr(instance, attribute.name))))
        return out

    def identity_items(self) -> List[Tuple[str, str]]:
        """:meth:`items` without input and output locations or the resume checkpoint."""
        return [
            (k, v) for k, v in self.items() if k.partition(".")[0] not in LOCATION_SECTIONS and k not in LOCATION_KEYS
        ]

    def resolved_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def digest(self) -> bytes:
        """SHA-256 of the resolved values that determine a run's result."""
        text = "".join(f"{k} = {v}\n" for k, v in self.identity_items())
        return hashlib.sha256(text.encode("utf-8")).digest()

    def to_metadata(self) -> Dict[str, str]:
        return dict(self.identity_items())

    def write_resolved(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.resolved_text(), encoding="utf-8")
        return path

    @staticmethod
    def describe_keys() -> str:
        """One line per key: name, default and help text."""
        defaults = RunConfig()
        lines = []
        for name, instance in defaults.sections().items():
            for attribute in attrs.fields(type(instance)):
                value = format_value(getattr(instance, attribute.name))
                help_text = attribute.metadata.get("help", "")
                lines.append(f"  {name}.{key_of(attribute)} = {value}    {help_text}")
        return "\n".join(lines)

    @property
    def debug(self) -> bool:
        return RunConfig._debug()
