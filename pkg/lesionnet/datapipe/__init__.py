from .balance import (
    BALANCED_TARGETS,
    AugmentationPlan,
    CellPlan,
    PlanEntry,
    plan_balance,
    plan_cell,
    read_plan,
    write_plan,
)
from .dataset import ArrayDataset, Batch, Dataset, ManifestDataset
from .images import (
    ImageBuffer,
    NormalizationStats,
    center_square_crop,
    crop_offsets,
    decode_image,
    load_image,
    normalize,
    preprocess,
    resize_224,
    resize_square,
    save_image,
)
from .manifest import CLASS_NAMES, DatasetManifest, ManifestRecord, parse_manifest, write_manifest
from .materialize import MaterializationReport, OutputRecord, materialize, read_output_manifest
from .split import SPLITS, SplitSpec, read_split_file, split_sizes, stratified_split, write_split_file
from .synthetic import ISIC2018_COUNTS, gaussian_clusters, isic2018_manifest, shapes_dataset, write_shapes_dataset
from .transforms import IDENTITY, TransformDescriptor, apply_transform, draw_descriptor, draw_descriptors

__all__ = [
    "CLASS_NAMES",
    "IDENTITY",
    "SPLITS",
    "ISIC2018_COUNTS",
    "BALANCED_TARGETS",
    "ArrayDataset",
    "AugmentationPlan",
    "Batch",
    "CellPlan",
    "Dataset",
    "DatasetManifest",
    "ImageBuffer",
    "ManifestDataset",
    "ManifestRecord",
    "MaterializationReport",
    "NormalizationStats",
    "OutputRecord",
    "PlanEntry",
    "SplitSpec",
    "TransformDescriptor",
    "apply_transform",
    "center_square_crop",
    "crop_offsets",
    "decode_image",
    "draw_descriptor",
    "draw_descriptors",
    "gaussian_clusters",
    "load_image",
    "materialize",
    "normalize",
    "parse_manifest",
    "plan_balance",
    "plan_cell",
    "preprocess",
    "read_output_manifest",
    "read_plan",
    "read_split_file",
    "resize_224",
    "resize_square",
    "save_image",
    "shapes_dataset",
    "split_sizes",
    "stratified_split",
    "isic2018_manifest",
    "write_manifest",
    "write_plan",
    "write_shapes_dataset",
    "write_split_file",
]
