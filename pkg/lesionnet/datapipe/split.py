"""
Leak-free stratified train/test split.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Literal, Union

from ..exceptions import InvalidArgumentException, ManifestException
from ..rng import stream
from .manifest import CLASS_NAMES, DatasetManifest

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]
SPLITS: tuple = ("train", "test")

PathLike = Union[str, os.PathLike]


def split_sizes(n: int, ratio: float) -> tuple:
    """``(train, test)`` with ``test = floor((1 − ratio)·n)`` computed exactly."""
    holdout = 1 - Fraction(ratio).limit_denominator(10**6)
    test = math.floor(holdout * n)
    return n - test, test


@dataclass
class SplitSpec:
    """Disjoint train and test id lists, each sorted, with the label of every id."""

    train_ids: List[str]
    test_ids: List[str]
    labels: Dict[str, int]
    seed: int
    ratio: float = 0.8
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise InvalidArgumentException(f"train and test share {len(overlap)} ids, e.g. {sorted(overlap)[0]!r}")

    def ids(self, split: Split) -> List[str]:
        if split not in SPLITS:
            raise InvalidArgumentException(f"split must be train or test, got {split!r}")
        return self.train_ids if split == "train" else self.test_ids

    def counts(self, split: Split) -> List[int]:
        counts = [0] * len(CLASS_NAMES)
        for i in self.ids(split):
            counts[self.labels[i]] += 1
        return counts

    def split_of(self, image_id: str) -> Split:
        if image_id in self._train_set:
            return "train"
        if image_id in self.labels:
            return "test"
        raise KeyError(image_id)

    @cached_property
    def _train_set(self) -> set:
        return set(self.train_ids)


def stratified_split(manifest: DatasetManifest, ratio: float = 0.8, seed: int = 0) -> SplitSpec:
    """
    Split every class independently: ids are sorted, shuffled with the class's own seeded
    stream, and the first ``n − floor((1 − ratio)·n)`` go to train.
    """
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentException(f"split ratio must be in (0, 1], got {ratio}")
    labels = {r.image_id: r.label for r in manifest}
    train: List[str] = []
    test: List[str] = []
    warnings: List[str] = []
    for label, ids in enumerate(manifest.ids_by_class()):
        name = CLASS_NAMES[label]
        if not ids:
            warnings.append(f"class {name} has no images")
            continue
        order = sorted(ids)
        perm = stream(seed, "split", name).permutation(len(order))
        n_train, n_test = split_sizes(len(order), ratio)
        shuffled = [order[i] for i in perm]
        train.extend(shuffled[:n_train])
        test.extend(shuffled[n_train:])
        if n_test == 0 and ratio < 1.0:
            warnings.append(f"class {name} has an empty test split ({len(order)} images)")
    if not test and manifest.records:
        warnings.append("test split is empty")
    for w in warnings:
        logger.warning(w)
    spec = SplitSpec(sorted(train), sorted(test), labels, seed, ratio, warnings)
    logger.info(f"Split {len(manifest)} images into {len(spec.train_ids)} train / {len(spec.test_ids)} test")
    return spec


def write_split_file(spec: SplitSpec, path: PathLike) -> Path:
    """One ``image_id,split`` line per image, train first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{i},train" for i in spec.train_ids] + [f"{i},test" for i in spec.test_ids]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def read_split_file(path: PathLike, manifest: DatasetManifest, seed: int = 0) -> SplitSpec:
    """
    :raises ManifestException: unknown id, unknown split name or a malformed line
    """
    path = Path(path)
    labels = {r.image_id: r.label for r in manifest}
    parts: Dict[str, List[str]] = {"train": [], "test": []}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2 or fields[1] not in parts:
            raise ManifestException(f"{path}: line {line_no}: expected 'image_id,train|test', got {line!r}")
        if fields[0] not in labels:
            raise ManifestException(f"{path}: line {line_no}: image {fields[0]!r} is not in the manifest")
        parts[fields[1]].append(fields[0])
    return SplitSpec(sorted(parts["train"]), sorted(parts["test"]), labels, seed)
