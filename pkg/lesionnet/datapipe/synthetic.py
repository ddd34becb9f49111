"""
Synthetic stand-ins for the lesion dataset: a manifest with the reference class counts,
a seven-class image set of coloured shapes, and seven 2-D Gaussian clusters.
"""

import logging
import math
import os
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import InvalidArgumentException
from ..rng import stream
from .images import ImageBuffer, save_image
from .manifest import CLASS_NAMES, DatasetManifest, ManifestRecord, write_manifest

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

ISIC2018_COUNTS = (1113, 6705, 514, 327, 1099, 115, 142)
"""Images per class of the reference training ground truth (10015 in total)."""

GROUND_TRUTH_FILE = "ground_truth.csv"

_PALETTE = (
    (200, 40, 40),
    (40, 160, 60),
    (50, 70, 200),
    (210, 190, 40),
    (160, 60, 180),
    (40, 180, 190),
    (230, 120, 30),
)


def isic2018_manifest(counts: Sequence[int] = ISIC2018_COUNTS, image_dir: PathLike = ".") -> DatasetManifest:
    """Manifest with ``counts[c]`` images of class ``c`` and ids ``ISIC_0000000``, ``ISIC_0000001`` ..."""
    if len(counts) != len(CLASS_NAMES):
        raise InvalidArgumentException(f"need {len(CLASS_NAMES)} class counts, got {len(counts)}")
    base = Path(image_dir)
    records: List[ManifestRecord] = []
    n = 0
    for label, count in enumerate(counts):
        for _ in range(count):
            image_id = f"ISIC_{n:07d}"
            records.append(ManifestRecord(image_id, str(base / f"{image_id}.jpg"), label))
            n += 1
    return DatasetManifest(records)


def shape_image(label: int, height: int, width: int, rng: np.random.Generator) -> ImageBuffer:
    """
    Noisy background with one class-coloured blob. The blob's shape depends on the class
    too (disc, square or ring), its size and position are jittered.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = height / 2 + rng.uniform(-0.1, 0.1) * height
    cx = width / 2 + rng.uniform(-0.1, 0.1) * width
    r = min(height, width) * rng.uniform(0.22, 0.32)
    if label % 3 == 0:
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif label % 3 == 1:
        mask = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    else:
        d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        mask = (d <= r) & (d >= 0.5 * r)
    pixels = rng.normal(120.0, 12.0, size=(height, width, 3))
    pixels[mask] = np.asarray(_PALETTE[label], dtype=np.float64) + rng.normal(0.0, 10.0, size=(int(mask.sum()), 3))
    return ImageBuffer(np.clip(np.rint(pixels), 0, 255).astype(np.uint8))


def shapes_dataset(
    per_class: Union[int, Sequence[int]],
    size: Tuple[int, int] = (48, 64),
    seed: int = 0,
    prefix: str = "SYN",
) -> Tuple[List[str], List[ImageBuffer], List[int]]:
    """
    ``(ids, images, labels)`` with ids ``<prefix>_<label>_<index:05d>``; every image is
    drawn from its own ``("synthetic", id)`` stream.
    """
    counts = [per_class] * len(CLASS_NAMES) if isinstance(per_class, int) else list(per_class)
    ids: List[str] = []
    images: List[ImageBuffer] = []
    labels: List[int] = []
    for label, count in enumerate(counts):
        for i in range(count):
            image_id = f"{prefix}_{label}_{i:05d}"
            ids.append(image_id)
            images.append(shape_image(label, size[0], size[1], stream(seed, "synthetic", image_id)))
            labels.append(label)
    return ids, images, labels


def write_shapes_dataset(
    root: PathLike,
    per_class: Union[int, Sequence[int]],
    size: Tuple[int, int] = (48, 64),
    seed: int = 0,
    suffix: str = ".raw",
) -> Path:
    """Write a shapes dataset and its ground-truth file under ``root``; returns the ground-truth path."""
    root = Path(root)
    ids, images, labels = shapes_dataset(per_class, size, seed)
    records = []
    for image_id, img, label in zip(ids, images, labels):
        path = save_image(img, root / f"{image_id}{suffix}")
        records.append(ManifestRecord(image_id, str(path), label))
    gt = write_manifest(DatasetManifest(records), root / GROUND_TRUTH_FILE)
    logger.info(f"Wrote {len(records)} synthetic images to {root}")
    return gt


def gaussian_clusters(
    per_class: int, seed: int = 0, radius: float = 4.0, spread: float = 1.0, num_classes: int = 7
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``num_classes`` isotropic 2-D Gaussians with centers evenly spaced on a circle.

    Returns ``(points per_class·C × 2 float32, labels)``.
    """
    rng = stream(seed, "clusters")
    angles = 2 * math.pi * np.arange(num_classes) / num_classes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = np.repeat(np.arange(num_classes), per_class)
    points = centers[labels] + rng.normal(0.0, spread, size=(labels.size, 2))
    return points.astype(np.float32), labels.astype(np.int64)
