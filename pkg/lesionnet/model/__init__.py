from .arch import ArchConfig, LayerPlan, LayerRecord, dense_layer_name, plan_architecture
from .densenet import (
    DenseNet,
    ImportReport,
    build,
    export_weights,
    import_weights,
    record_of,
    reinitialize_trainable,
)

__all__ = [
    "ArchConfig",
    "DenseNet",
    "ImportReport",
    "LayerPlan",
    "LayerRecord",
    "build",
    "dense_layer_name",
    "export_weights",
    "import_weights",
    "plan_architecture",
    "record_of",
    "reinitialize_trainable",
]
