from .checkpoint import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .optimizer import SGD, OptimizerConfig, lr_at, sgd_step
from .sampler import EpochSampler
from .loop import (
    LOG_HEADER,
    MemorySink,
    StepRecord,
    TrainingLogWriter,
    TrainingReport,
    TrainingSink,
    TrainingState,
    collect_checkpoint,
    restore_checkpoint,
    train,
)

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "EpochSampler",
    "LOG_HEADER",
    "MemorySink",
    "OptimizerConfig",
    "SGD",
    "StepRecord",
    "TrainingLogWriter",
    "TrainingReport",
    "TrainingSink",
    "TrainingState",
    "collect_checkpoint",
    "load_checkpoint",
    "lr_at",
    "restore_checkpoint",
    "save_checkpoint",
    "sgd_step",
    "train",
]
