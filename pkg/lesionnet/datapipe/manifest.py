"""
Ground-truth manifest: one-hot class rows keyed by image id.
"""

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

from ..exceptions import ManifestException

logger = logging.getLogger(__name__)

CLASS_NAMES = ("MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC")
MANIFEST_HEADER = ("image",) + CLASS_NAMES
IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".raw")

PathLike = Union[str, os.PathLike]


def class_index(name: str) -> int:
    try:
        return CLASS_NAMES.index(name)
    except ValueError:
        raise ManifestException(f"unknown class {name!r}; expected one of {', '.join(CLASS_NAMES)}") from None


def resolve_image_path(image_dir: Path, image_id: str) -> Path:
    """First existing ``<image_dir>/<image_id><ext>``, else the ``.jpg`` candidate."""
    for ext in IMAGE_EXTENSIONS:
        candidate = image_dir / f"{image_id}{ext}"
        if candidate.exists():
            return candidate
    return image_dir / f"{image_id}{IMAGE_EXTENSIONS[0]}"


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    path: str
    label: int


@dataclass
class DatasetManifest:
    records: List[ManifestRecord]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.image_id in seen:
                raise ManifestException(f"duplicate image id {r.image_id!r}")
            seen.add(r.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def by_id(self) -> Dict[str, ManifestRecord]:
        return {r.image_id: r for r in self.records}

    def ids_by_class(self) -> List[List[str]]:
        ids: List[List[str]] = [[] for _ in CLASS_NAMES]
        for r in self.records:
            ids[r.label].append(r.image_id)
        return ids

    def class_counts(self) -> List[int]:
        counts = [0] * len(CLASS_NAMES)
        for r in self.records:
            counts[r.label] += 1
        return counts


def _parse_row(row: Sequence[str], line: int) -> tuple:
    if len(row) != len(MANIFEST_HEADER):
        raise ManifestException(f"line {line}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}")
    image_id = row[0].strip()
    if not image_id:
        raise ManifestException(f"line {line}: empty image id")
    try:
        values = [float(v) for v in row[1:]]
    except ValueError:
        raise ManifestException(f"line {line}: non-numeric label column in {row!r}") from None
    if any(v not in (0.0, 1.0) for v in values):
        raise ManifestException(f"line {line}: label columns must be 0.0 or 1.0")
    positives = [i for i, v in enumerate(values) if v == 1.0]
    if len(positives) != 1:
        raise ManifestException(
            f"line {line}: image {image_id!r} has {len(positives)} positive labels, expected exactly 1"
        )
    return image_id, positives[0]


def parse_manifest(path: PathLike, image_dir: Optional[PathLike] = None) -> DatasetManifest:
    """
    Read a ground-truth file with header ``image,MEL,NV,BCC,AKIEC,BKL,DF,VASC``.

    Image paths are resolved against ``image_dir`` (default: the file's directory).

    :raises ManifestException: malformed row (with its line number) or duplicate id
    """
    path = Path(path)
    base = Path(image_dir) if image_dir is not None else path.parent
    records: List[ManifestRecord] = []
    seen: Dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ManifestException(f"{path}: line 1: header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or not any(c.strip() for c in row):
                continue
            image_id, label = _parse_row(row, line)
            if image_id in seen:
                raise ManifestException(
                    f"line {line}: duplicate image id {image_id!r} (first on line {seen[image_id]})"
                )
            seen[image_id] = line
            records.append(ManifestRecord(image_id, str(resolve_image_path(base, image_id)), label))
    manifest = DatasetManifest(records)
    logger.info(f"Parsed {len(manifest)} images from {path}: {dict(zip(CLASS_NAMES, manifest.class_counts()))}")
    return manifest


def write_manifest(manifest: DatasetManifest, path: PathLike) -> Path:
    """Write ``manifest`` as a one-hot ground-truth file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in manifest:
            writer.writerow([r.image_id] + ["1.0" if c == r.label else "0.0" for c in range(len(CLASS_NAMES))])
    return path
