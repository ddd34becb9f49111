"""
Label-preserving geometric transforms used to balance classes.

A descriptor is drawn from the ``("plan", image_id, slot)`` stream, so every augmented
image is reproducible on its own. Slot 0 is always the identity.

Descriptor text form (used in plans and output manifests)::

    identity | hflip | vflip | rotation(<degrees>) | affine(<a>,<b>,<tx>,<c>,<d>,<ty>)

Affine matrices act on ``(x, y)`` pixel offsets from the image center; ``tx``/``ty`` are
fractions of the width/height.
"""

import math
import re
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy import ndimage

from ..exceptions import InvalidArgumentException
from ..rng import stream
from .images import ImageBuffer

TransformKind = Literal["identity", "rotation", "hflip", "vflip", "affine"]

RIGHT_ANGLES = (90.0, 180.0, 270.0)
MAX_SMALL_ROTATION = 30.0
AFFINE_SCALE = (0.9, 1.1)
AFFINE_SHEAR = 0.1
MAX_TRANSLATION = 0.05
DEGENERATE_DET = 1e-6

_FAMILIES: Tuple[TransformKind, ...] = ("rotation", "hflip", "vflip", "affine")
_TEXT = re.compile(r"^(identity|hflip|vflip|rotation|affine)(?:\(([^)]*)\))?$")


@dataclass(frozen=True)
class TransformDescriptor:
    kind: TransformKind
    angle: float = 0.0
    """Counter-clockwise rotation in degrees."""
    matrix: Optional[Tuple[float, float, float, float, float, float]] = None
    """``(a, b, tx, c, d, ty)`` of an affine transform."""

    def __post_init__(self):
        if self.kind not in ("identity",) + _FAMILIES:
            raise InvalidArgumentException(f"unknown transform kind {self.kind!r}")
        if self.kind == "affine":
            if self.matrix is None or len(self.matrix) != 6:
                raise InvalidArgumentException("affine descriptor needs a 2x3 matrix")
            if not all(math.isfinite(v) for v in self.matrix):
                raise InvalidArgumentException(f"affine matrix has non-finite entries: {self.matrix}")
        if not math.isfinite(self.angle):
            raise InvalidArgumentException(f"rotation angle must be finite, got {self.angle}")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def to_text(self) -> str:
        if self.kind == "rotation":
            return f"rotation({self.angle!r})"
        if self.kind == "affine":
            return "affine(" + ",".join(repr(v) for v in self.matrix) + ")"  # type: ignore[union-attr]
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "TransformDescriptor":
        m = _TEXT.match(text.strip())
        if not m:
            raise InvalidArgumentException(f"cannot parse transform descriptor {text!r}")
        kind, args = m.group(1), m.group(2)
        try:
            if kind == "rotation":
                return cls("rotation", angle=float(args))
            if kind == "affine":
                values = tuple(float(v) for v in args.split(","))
                return cls("affine", matrix=values)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise InvalidArgumentException(f"bad arguments in transform descriptor {text!r}") from None
        return cls(kind)  # type: ignore[arg-type]


IDENTITY = TransformDescriptor("identity")


def draw_descriptor(seed: int, image_id: str, slot: int) -> TransformDescriptor:
    """
    Descriptor for ``slot`` of ``image_id``. Families are equally likely; half of the
    rotations are right angles, the rest uniform in ±30°.
    """
    if slot == 0:
        return IDENTITY
    rng = stream(seed, "plan", image_id, slot)
    kind = _FAMILIES[int(rng.integers(len(_FAMILIES)))]
    if kind == "rotation":
        if rng.random() < 0.5:
            angle = RIGHT_ANGLES[int(rng.integers(len(RIGHT_ANGLES)))]
        else:
            angle = round(float(rng.uniform(-MAX_SMALL_ROTATION, MAX_SMALL_ROTATION)), 6)
        return TransformDescriptor("rotation", angle=angle)
    if kind == "affine":
        a, d = (round(float(v), 6) for v in rng.uniform(*AFFINE_SCALE, size=2))
        b, c = (round(float(v), 6) for v in rng.uniform(-AFFINE_SHEAR, AFFINE_SHEAR, size=2))
        tx, ty = (round(float(v), 6) for v in rng.uniform(-MAX_TRANSLATION, MAX_TRANSLATION, size=2))
        return TransformDescriptor("affine", matrix=(a, b, tx, c, d, ty))
    return TransformDescriptor(kind)


def draw_descriptors(seed: int, image_id: str, multiplicity: int) -> List[TransformDescriptor]:
    if multiplicity < 1:
        raise InvalidArgumentException(f"multiplicity must be >= 1, got {multiplicity}")
    return [draw_descriptor(seed, image_id, slot) for slot in range(multiplicity)]


def _resample(pixels: np.ndarray, matrix: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Bilinear resampling ``out[p] = in[matrix·p + offset]`` with edge replication."""
    src = pixels.astype(np.float64)
    out = np.empty_like(src)
    for ch in range(src.shape[2]):
        ndimage.affine_transform(
            src[:, :, ch], matrix, offset=offset, output=out[:, :, ch], order=1, mode="nearest"
        )
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _center(pixels: np.ndarray) -> np.ndarray:
    return np.array([(pixels.shape[0] - 1) / 2.0, (pixels.shape[1] - 1) / 2.0])


def rotate(img: ImageBuffer, angle: float) -> ImageBuffer:
    """
    Counter-clockwise rotation about the center. Multiples of 90° are exact sample
    permutations (and swap height and width); other angles keep the canvas.
    """
    quarter = angle / 90.0
    if quarter == int(quarter):
        return ImageBuffer(np.rot90(img.pixels, k=int(quarter) % 4, axes=(0, 1)).copy())
    theta = math.radians(angle)
    cos, sin = math.cos(theta), math.sin(theta)
    matrix = np.array([[cos, sin], [-sin, cos]])
    center = _center(img.pixels)
    return ImageBuffer(_resample(img.pixels, matrix, center - matrix @ center))


def affine(img: ImageBuffer, values: Tuple[float, ...]) -> ImageBuffer:
    a, b, tx, c, d, ty = values
    if abs(a * d - b * c) < DEGENERATE_DET:
        raise InvalidArgumentException(f"degenerate affine matrix (determinant {a * d - b * c:g})")
    # (row, col) form of the (x, y) matrix and translation
    forward = np.array([[d, c], [b, a]])
    shift = np.array([ty * img.height, tx * img.width])
    inverse = np.linalg.inv(forward)
    center = _center(img.pixels)
    return ImageBuffer(_resample(img.pixels, inverse, center - inverse @ (center + shift)))


def apply_transform(img: ImageBuffer, descriptor: TransformDescriptor) -> ImageBuffer:
    """
    :raises InvalidArgumentException: degenerate affine matrix
    """
    kind = descriptor.kind
    if kind == "identity":
        return img.copy()
    if kind == "hflip":
        return ImageBuffer(img.pixels[:, ::-1].copy())
    if kind == "vflip":
        return ImageBuffer(img.pixels[::-1].copy())
    if kind == "rotation":
        return rotate(img, descriptor.angle)
    return affine(img, descriptor.matrix)  # type: ignore[arg-type]
