"""
Datasets feeding the trainer and the evaluator.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Union

import numpy as np

from ..exceptions import InvalidArgumentException, shape_mismatch_exception
from ..rng import stream
from .images import ImageBuffer, NormalizationStats, load_image, normalize, preprocess
from .manifest import resolve_image_path
from .materialize import OUTPUT_MANIFEST, read_output_manifest

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


@dataclass
class Batch:
    x: np.ndarray
    """``N×C×S×S`` float32 network input."""
    labels: np.ndarray
    ids: List[str]


class Dataset(Protocol):
    ids: List[str]
    labels: np.ndarray

    def __len__(self) -> int: ...

    def batch(self, indices: Sequence[int]) -> Batch: ...


class ArrayDataset:
    """In-memory samples: normalized ``N×C×S×S`` images or ``N×d`` vectors."""

    def __init__(self, x: np.ndarray, labels: Sequence[int], ids: Optional[Sequence[str]] = None):
        x = np.ascontiguousarray(x, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        if x.ndim < 2 or x.shape[0] != labels.shape[0]:
            raise shape_mismatch_exception("ArrayDataset", x.shape, labels.shape)
        self.x = x
        self.labels = labels
        self.ids = list(ids) if ids is not None else [f"sample_{i:06d}" for i in range(len(labels))]
        if len(self.ids) != len(labels):
            raise shape_mismatch_exception("ArrayDataset ids", (len(self.ids),), labels.shape)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def batch(self, indices: Sequence[int]) -> Batch:
        idx = np.asarray(indices, dtype=np.int64)
        return Batch(self.x[idx], self.labels[idx], [self.ids[i] for i in idx])


class ManifestDataset:
    """
    One materialized split, loaded lazily: decode, center-square crop, resize, normalize.

    With ``workers > 1`` the images of a batch are decoded on a thread pool; results keep
    the batch order.
    """

    def __init__(
        self,
        split_dir: PathLike,
        input_size: int = 224,
        stats: Optional[NormalizationStats] = None,
        workers: int = 1,
    ):
        if workers < 1:
            raise InvalidArgumentException(f"workers must be >= 1, got {workers}")
        self.split_dir = Path(split_dir)
        self.input_size = input_size
        self.stats = stats or NormalizationStats()
        self.workers = workers
        records = read_output_manifest(self.split_dir / OUTPUT_MANIFEST)
        self.ids = [r.output_id for r in records]
        self.labels = np.asarray([r.label for r in records], dtype=np.int64)
        self.paths = [resolve_image_path(self.split_dir, r.output_id) for r in records]
        logger.debug(f"Opened {len(self.ids)} images from {self.split_dir}")

    def __len__(self) -> int:
        return len(self.ids)

    def load(self, index: int) -> ImageBuffer:
        return preprocess(load_image(self.paths[index]), self.input_size)

    def _load_many(self, indices: Sequence[int]) -> List[ImageBuffer]:
        if self.workers == 1 or len(indices) < 2:
            return [self.load(i) for i in indices]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(self.load, indices))

    def batch(self, indices: Sequence[int]) -> Batch:
        idx = [int(i) for i in indices]
        images = self._load_many(idx)
        x = normalize(images, self.stats).data
        return Batch(x, self.labels[idx], [self.ids[i] for i in idx])

    def normalization_stats(self, sample: Optional[int] = None, seed: int = 0) -> NormalizationStats:
        """Statistics over all images, or over a seeded sample of ``sample`` of them."""
        order: Sequence[int] = range(len(self))
        if sample is not None and sample < len(self):
            order = sorted(stream(seed, "norm").choice(len(self), size=sample, replace=False).tolist())
        return NormalizationStats.from_images(self.load(i) for i in order)
