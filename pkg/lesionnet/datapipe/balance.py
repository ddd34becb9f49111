"""
Class-balancing plan: how many augmented copies every source image contributes.

Multiplicities are fixed per (class, split) cell as ``target / source``. A target that is
not a multiple of its source count is reported with the closest achievable counts and
the remainder goes, one extra copy each, to the lexicographically first ids of the cell.
"""

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

from ..exceptions import InvalidArgumentException, ManifestException
from .manifest import CLASS_NAMES, class_index
from .split import SPLITS, Split, SplitSpec
from .transforms import TransformDescriptor, draw_descriptors

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

BALANCED_TARGETS: Dict[str, tuple] = {
    "train": (40095, 69732, 37492, 36418, 41360, 35052, 35226),
    "test": (10434, 17433, 9282, 9035, 10293, 8763, 8764),
}
"""Balanced per-class image counts of the reference augmented dataset."""


@dataclass(frozen=True)
class CellPlan:
    """Plan for one (split, class) cell."""

    split: Split
    label: int
    source_count: int
    target: int
    multiplicity: int
    """Copies per source image (the lexicographically first ``remainder`` ids get one more)."""
    remainder: int = 0

    @property
    def exact(self) -> bool:
        return self.remainder == 0

    @property
    def total(self) -> int:
        return self.source_count * self.multiplicity + self.remainder


@dataclass(frozen=True)
class PlanEntry:
    image_id: str
    split: Split
    label: int
    multiplicity: int


@dataclass
class AugmentationPlan:
    entries: List[PlanEntry]
    cells: List[CellPlan]
    seed: int
    warnings: List[str] = field(default_factory=list)

    @cached_property
    def _by_id(self) -> Dict[str, PlanEntry]:
        return {e.image_id: e for e in self.entries}

    def entry(self, image_id: str) -> PlanEntry:
        return self._by_id[image_id]

    def descriptors(self, image_id: str) -> List[TransformDescriptor]:
        """Transform list of ``image_id``; the first one is the identity."""
        return draw_descriptors(self.seed, image_id, self.entry(image_id).multiplicity)

    def totals(self, split: Split) -> List[int]:
        totals = [0] * len(CLASS_NAMES)
        for e in self.entries:
            if e.split == split:
                totals[e.label] += e.multiplicity
        return totals

    def deviations(self) -> List[CellPlan]:
        return [c for c in self.cells if not c.exact]

    def balance_ratio(self, split: Split) -> float:
        """Largest over smallest non-empty class total."""
        totals = [t for t in self.totals(split) if t > 0]
        return max(totals) / min(totals) if totals else 1.0


def plan_cell(split: Split, label: int, source_count: int, target: int) -> CellPlan:
    if source_count == 0:
        if target:
            raise InvalidArgumentException(
                f"{split} {CLASS_NAMES[label]}: target {target} for a class without images"
            )
        return CellPlan(split, label, 0, 0, 0)
    if target < source_count:
        raise InvalidArgumentException(
            f"{split} {CLASS_NAMES[label]}: target {target} is below the source count {source_count}"
        )
    multiplicity, remainder = divmod(target, source_count)
    return CellPlan(split, label, source_count, target, multiplicity, remainder)


def plan_balance(
    split: SplitSpec,
    targets: Mapping[str, Sequence[int]] = BALANCED_TARGETS,
    seed: int = 0,
) -> AugmentationPlan:
    """
    Plan multiplicities for every image of both splits. A split missing from ``targets``
    is kept as it is (multiplicity 1).

    :raises InvalidArgumentException: a target below its source count
    """
    entries: List[PlanEntry] = []
    cells: List[CellPlan] = []
    warnings: List[str] = []
    for name in SPLITS:
        ids_by_class: List[List[str]] = [[] for _ in CLASS_NAMES]
        for image_id in split.ids(name):
            ids_by_class[split.labels[image_id]].append(image_id)
        goal = targets.get(name)
        if goal is not None and len(goal) != len(CLASS_NAMES):
            raise InvalidArgumentException(f"{name} targets need {len(CLASS_NAMES)} values, got {len(goal)}")
        for label, ids in enumerate(ids_by_class):
            cell = plan_cell(name, label, len(ids), goal[label] if goal is not None else len(ids))
            cells.append(cell)
            if not cell.exact:
                low = cell.source_count * cell.multiplicity
                msg = (
                    f"{name} {CLASS_NAMES[label]}: target {cell.target} is not a multiple of "
                    f"{cell.source_count} (closest achievable {low} or {low + cell.source_count}); "
                    f"{cell.remainder} images get one extra copy"
                )
                logger.warning(msg)
                warnings.append(msg)
            for rank, image_id in enumerate(sorted(ids)):
                extra = 1 if rank < cell.remainder else 0
                entries.append(PlanEntry(image_id, name, label, cell.multiplicity + extra))
    plan = AugmentationPlan(entries, cells, seed, warnings)
    for name in SPLITS:
        logger.info(f"Planned {name}: {dict(zip(CLASS_NAMES, plan.totals(name)))}")
    return plan


def write_plan(plan: AugmentationPlan, path: PathLike) -> Path:
    """``image_id,split,class,multiplicity`` lines preceded by a ``# seed`` comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# seed {plan.seed}", "image_id,split,class,multiplicity"]
    lines += [f"{e.image_id},{e.split},{CLASS_NAMES[e.label]},{e.multiplicity}" for e in plan.entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_plan(path: PathLike) -> AugmentationPlan:
    """
    Read a plan written by :func:`write_plan`. Cells are rebuilt from the entries.

    :raises ManifestException: malformed line
    """
    path = Path(path)
    seed = 0
    entries: List[PlanEntry] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text == "image_id,split,class,multiplicity":
            continue
        if text.startswith("#"):
            parts = text[1:].split()
            if len(parts) == 2 and parts[0] == "seed":
                seed = int(parts[1])
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            image_id, split, cls, mult = fields
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r}")
            entries.append(PlanEntry(image_id, split, class_index(cls), int(mult)))  # type: ignore[arg-type]
        except (ValueError, ManifestException) as e:
            raise ManifestException(f"{path}: line {line_no}: {e}") from None

    cells = []
    for name in SPLITS:
        for label in range(len(CLASS_NAMES)):
            mults = sorted((e.multiplicity for e in entries if e.split == name and e.label == label), reverse=True)
            if not mults:
                cells.append(CellPlan(name, label, 0, 0, 0))
                continue
            base = mults[-1]
            remainder = sum(1 for m in mults if m > base)
            cells.append(CellPlan(name, label, len(mults), sum(mults), base, remainder))
    return AugmentationPlan(entries, cells, seed)
