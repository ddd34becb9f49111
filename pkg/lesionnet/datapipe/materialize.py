"""
Writing the augmented dataset to disk.

Layout of ``output_dir``::

    train/manifest.csv   output_id,source_id,class,transform   (sorted by output_id)
    train/<output_id>.<ext>
    test/...

Output ids are ``<source_id>_<slot:04d>``. Identity copies keep the source file bytes
(unless a fixed output size is requested); transformed images are written as PNG, or in
the raw format when the source is raw.
"""

import csv
import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dataclasses_json import dataclass_json

from ..exceptions import InvalidArgumentException, LesionNetException, MaterializationException
from .balance import AugmentationPlan, PlanEntry
from .images import RAW_SUFFIX, load_image, preprocess, save_image
from .manifest import CLASS_NAMES, DatasetManifest
from .split import SPLITS
from .transforms import TransformDescriptor, apply_transform

logger = logging.getLogger(__name__)

OUTPUT_MANIFEST = "manifest.csv"
OUTPUT_HEADER = ("output_id", "source_id", "class", "transform")

PathLike = Union[str, os.PathLike]


def output_id(source_id: str, slot: int) -> str:
    return f"{source_id}_{slot:04d}"


@dataclass(frozen=True)
class OutputRecord:
    output_id: str
    source_id: str
    label: int
    transform: str


@dataclass_json
@dataclass
class MaterializationReport:
    output_dir: str
    totals: Dict[str, List[int]] = field(default_factory=dict)
    """Output images per class, by split."""
    copies: int = 0
    transformed: int = 0

    @property
    def records(self) -> int:
        return self.copies + self.transformed


def _materialize_image(
    entry: PlanEntry,
    source: Path,
    descriptors: List[TransformDescriptor],
    split_dir: Path,
    output_size: Optional[int],
) -> Tuple[List[OutputRecord], int]:
    records: List[OutputRecord] = []
    copies = 0
    image = None
    raw = source.suffix.lower() == RAW_SUFFIX
    for slot, descriptor in enumerate(descriptors):
        oid = output_id(entry.image_id, slot)
        if descriptor.is_identity and output_size is None:
            shutil.copyfile(source, split_dir / f"{oid}{source.suffix}")
            copies += 1
        else:
            if image is None:
                image = load_image(source)
            out = apply_transform(image, descriptor)
            if output_size is not None:
                out = preprocess(out, output_size)
            save_image(out, split_dir / f"{oid}{RAW_SUFFIX if raw else '.png'}")
        records.append(OutputRecord(oid, entry.image_id, entry.label, descriptor.to_text()))
    return records, copies


def write_output_manifest(records: List[OutputRecord], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(OUTPUT_HEADER)
        for r in sorted(records, key=lambda r: r.output_id):
            writer.writerow([r.output_id, r.source_id, CLASS_NAMES[r.label], r.transform])


def materialize(
    plan: AugmentationPlan,
    manifest: DatasetManifest,
    output_dir: PathLike,
    output_size: Optional[int] = None,
    workers: int = 1,
    overwrite: bool = False,
) -> MaterializationReport:
    """
    Write every planned output image and one output manifest per split.

    Images are processed in parallel on ``workers`` threads; the result does not depend
    on the worker count. ``output_size`` additionally applies the center-square crop and
    resize to every output.

    Split directories left by an earlier run (they hold an output manifest) are rewritten,
    so a repeated call leaves the same bytes behind. Any other non-empty split directory
    is only replaced with ``overwrite``.

    :raises InvalidArgumentException: a split directory has foreign content and ``overwrite``
        is not set

    :raises MaterializationException: an image could not be read, transformed or written;
        everything written so far has been removed
    """
    if workers < 1:
        raise InvalidArgumentException(f"workers must be >= 1, got {workers}")
    out = Path(output_dir)
    sources = {r.image_id: Path(r.path) for r in manifest}
    missing = [e.image_id for e in plan.entries if e.image_id not in sources]
    if missing:
        raise InvalidArgumentException(f"{len(missing)} planned images are not in the manifest, e.g. {missing[0]!r}")

    split_dirs = {name: out / name for name in SPLITS}
    occupied = [d for d in split_dirs.values() if d.exists() and any(d.iterdir())]
    foreign = [d for d in occupied if not (d / OUTPUT_MANIFEST).is_file()]
    if foreign and not overwrite:
        raise InvalidArgumentException(f"output directory {foreign[0]} is not empty and holds no {OUTPUT_MANIFEST}")
    for d in occupied:
        logger.info(f"Replacing the contents of {d}")
        shutil.rmtree(d)

    report = MaterializationReport(output_dir=str(out))
    created: List[Path] = []
    try:
        for d in split_dirs.values():
            d.mkdir(parents=True, exist_ok=True)
            created.append(d)
        for name in SPLITS:
            entries = [e for e in plan.entries if e.split == name]

            def work(entry: PlanEntry) -> Tuple[List[OutputRecord], int]:
                return _materialize_image(
                    entry, sources[entry.image_id], plan.descriptors(entry.image_id), split_dirs[name], output_size
                )

            if workers == 1:
                results = [work(e) for e in entries]
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(work, entries))

            records = [r for recs, _ in results for r in recs]
            copies = sum(c for _, c in results)
            write_output_manifest(records, split_dirs[name] / OUTPUT_MANIFEST)
            totals = [0] * len(CLASS_NAMES)
            for r in records:
                totals[r.label] += 1
            report.totals[name] = totals
            report.copies += copies
            report.transformed += len(records) - copies
            logger.info(f"Materialized {len(records)} {name} images into {split_dirs[name]}")
    except (OSError, LesionNetException) as e:
        for d in created:
            shutil.rmtree(d, ignore_errors=True)
        raise MaterializationException(f"materialization into {out} failed: {e}") from e

    for name in SPLITS:
        if report.totals[name] != plan.totals(name):
            raise MaterializationException(
                f"{name} totals {report.totals[name]} differ from the plan {plan.totals(name)}"
            )
    return report


def read_output_manifest(path: PathLike) -> List[OutputRecord]:
    """
    :raises MaterializationException: malformed output manifest
    """
    path = Path(path)
    records: List[OutputRecord] = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != OUTPUT_HEADER:
            raise MaterializationException(f"{path}: header must be {','.join(OUTPUT_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(OUTPUT_HEADER) or row[2] not in CLASS_NAMES:
                raise MaterializationException(f"{path}: line {reader.line_num}: malformed row {row!r}")
            records.append(OutputRecord(row[0], row[1], CLASS_NAMES.index(row[2]), row[3]))
    return records
