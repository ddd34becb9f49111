"""
lesionnet

DenseNet-BC classification of dermoscopic lesion images, trained with a joint softmax and
center-loss objective:
- NumPy tensors with tape-based reverse-mode differentiation
- Configurable DenseNet-BC with layer freezing and weight import
- Stratified split, class-balancing augmentation and image preprocessing
- SGD training with step schedule, bit-exact checkpoints and resume
- Balanced multi-class accuracy evaluation
"""

from .version import __version__, __version_info__

__author__ = "lesionnet developers"

# Core imports
from .datapipe import (
    CLASS_NAMES,
    ArrayDataset,
    ManifestDataset,
    NormalizationStats,
    materialize,
    parse_manifest,
    plan_balance,
    stratified_split,
)
from .evaluation import ConfusionMatrix, MetricsReport, balanced_accuracy, evaluate
from .exceptions import (
    CheckpointException,
    ConfigValidationException,
    ImageDecodeException,
    InvalidArgumentException,
    LesionNetException,
    ManifestException,
    MaterializationException,
    NonDeterministicFunctionException,
    NonFiniteException,
    ShapeMismatchException,
    TapeException,
    TrainingException,
)
from .losses import CenterBank, LossConfig, center_loss, joint_loss, softmax_cross_entropy
from .model import ArchConfig, DenseNet, LayerPlan, build, export_weights, import_weights, plan_architecture

# Configuration
from .run_config import RunConfig
from .tensor import Tape, Tensor, backward, finite_diff_check
from .trainer import Checkpoint, OptimizerConfig, load_checkpoint, lr_at, save_checkpoint, train

__all__ = [
    # Version info
    "__version__",
    "__version_info__",
    "__author__",
    # Tensors
    "Tensor",
    "Tape",
    "backward",
    "finite_diff_check",
    # Model
    "ArchConfig",
    "LayerPlan",
    "DenseNet",
    "plan_architecture",
    "build",
    "import_weights",
    "export_weights",
    # Losses
    "CenterBank",
    "LossConfig",
    "softmax_cross_entropy",
    "center_loss",
    "joint_loss",
    # Training
    "OptimizerConfig",
    "Checkpoint",
    "lr_at",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    # Data
    "CLASS_NAMES",
    "ArrayDataset",
    "ManifestDataset",
    "NormalizationStats",
    "parse_manifest",
    "stratified_split",
    "plan_balance",
    "materialize",
    # Evaluation
    "ConfusionMatrix",
    "MetricsReport",
    "balanced_accuracy",
    "evaluate",
    # Exceptions
    "LesionNetException",
    "ShapeMismatchException",
    "TapeException",
    "NonFiniteException",
    "NonDeterministicFunctionException",
    "InvalidArgumentException",
    "ManifestException",
    "CheckpointException",
    "ImageDecodeException",
    "MaterializationException",
    "ConfigValidationException",
    "TrainingException",
    # Configuration
    "RunConfig",
]
