"""
8-bit RGB image buffers: decoding, encoding, center-square cropping, resizing and
normalization into network input.

Besides PNG and JPEG (through Pillow) a headerless raw format is understood for synthetic
data: ``u32 height | u32 width`` (little-endian) followed by ``height·width·3`` bytes in
row-major RGB order. Files ending in ``.raw`` use it.
"""

import io
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from tenacity import retry, retry_if_exception, stop_after_attempt, wait_exponential

from ..exceptions import ImageDecodeException, InvalidArgumentException
from ..tensor import Tensor

logger = logging.getLogger(__name__)

RAW_SUFFIX = ".raw"
_RAW_HEAD = struct.Struct("<II")

PathLike = Union[str, os.PathLike]


@dataclass
class ImageBuffer:
    """``H×W×3`` array of 8-bit samples."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise InvalidArgumentException(f"image must be H×W×3 with H, W >= 1, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise InvalidArgumentException(f"image samples must be uint8, got {p.dtype}")
        self.pixels = np.ascontiguousarray(p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.pixels.copy())

    def equals(self, other: "ImageBuffer") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


def _transient(e: BaseException) -> bool:
    return isinstance(e, OSError) and not isinstance(
        e, (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError)
    )


@retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.05, max=1),
    retry=retry_if_exception(_transient),
    reraise=True,
)
def _read_bytes(path: Path) -> bytes:
    return path.read_bytes()


def decode_raw(data: bytes) -> ImageBuffer:
    if len(data) < _RAW_HEAD.size:
        raise ImageDecodeException("raw image shorter than its header")
    h, w = _RAW_HEAD.unpack_from(data, 0)
    expected = _RAW_HEAD.size + h * w * 3
    if h < 1 or w < 1 or len(data) != expected:
        raise ImageDecodeException(f"raw image {h}x{w} needs {expected} bytes, got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=_RAW_HEAD.size).reshape(h, w, 3)
    return ImageBuffer(pixels.copy())


def encode_raw(img: ImageBuffer) -> bytes:
    return _RAW_HEAD.pack(img.height, img.width) + img.pixels.tobytes()


def decode_image(data: bytes, raw: bool = False) -> ImageBuffer:
    if raw:
        return decode_raw(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            return ImageBuffer(np.asarray(im.convert("RGB"), dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageDecodeException(f"cannot decode image: {e}") from e


def load_image(path: PathLike) -> ImageBuffer:
    """
    Read and decode one image file; transient read errors are retried.

    :raises ImageDecodeException: unreadable or undecodable file
    """
    path = Path(path)
    try:
        data = _read_bytes(path)
    except OSError as e:
        raise ImageDecodeException(f"cannot read image {path}: {e}") from e
    try:
        return decode_image(data, raw=path.suffix.lower() == RAW_SUFFIX)
    except ImageDecodeException as e:
        raise ImageDecodeException(f"{path}: {e}") from e


def save_image(img: ImageBuffer, path: PathLike) -> Path:
    """Write ``img`` in the format implied by the suffix (``.raw``, ``.png``, ``.jpg``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == RAW_SUFFIX:
        path.write_bytes(encode_raw(img))
    else:
        Image.fromarray(img.pixels).save(path)
    return path


def crop_offsets(height: int, width: int) -> Tuple[int, int, int]:
    """``(side, top, left)`` of the centered square crop."""
    side = min(height, width)
    return side, (height - side) // 2, (width - side) // 2


def center_square_crop(img: ImageBuffer) -> ImageBuffer:
    """Centered square of side ``min(H, W)``."""
    side, top, left = crop_offsets(img.height, img.width)
    return ImageBuffer(img.pixels[top : top + side, left : left + side].copy())


def resize_square(img: ImageBuffer, size: int = 224) -> ImageBuffer:
    """Bilinear resize to ``size × size``; an image already that size is returned as a copy."""
    if size < 1:
        raise InvalidArgumentException(f"resize target must be >= 1, got {size}")
    if img.shape == (size, size):
        return img.copy()
    resized = Image.fromarray(img.pixels).resize((size, size), Image.Resampling.BILINEAR)
    return ImageBuffer(np.asarray(resized, dtype=np.uint8))


def resize_224(img: ImageBuffer) -> ImageBuffer:
    return resize_square(img, 224)


def preprocess(img: ImageBuffer, size: int = 224) -> ImageBuffer:
    """Center-square crop followed by the resize to network input."""
    return resize_square(center_square_crop(img), size)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean and standard deviation of training images on the [0, 1] scale."""

    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise InvalidArgumentException("normalization statistics need three channels")
        if any(not s > 0 for s in self.std):
            raise InvalidArgumentException(f"normalization std must be positive, got {self.std}")

    @classmethod
    def from_images(cls, images: Iterable[ImageBuffer]) -> "NormalizationStats":
        total = np.zeros(3, dtype=np.float64)
        total_sq = np.zeros(3, dtype=np.float64)
        count = 0
        for img in images:
            x = img.pixels.reshape(-1, 3).astype(np.float64) / 255.0
            total += x.sum(axis=0)
            total_sq += (x * x).sum(axis=0)
            count += x.shape[0]
        if count == 0:
            raise InvalidArgumentException("cannot compute normalization statistics from no images")
        mean = total / count
        std = np.sqrt(np.maximum(total_sq / count - mean * mean, 0.0))
        if (std < 1e-6).any():
            logger.warning(f"Constant image channel(s) {np.flatnonzero(std < 1e-6).tolist()}; using std 1")
            std = np.where(std < 1e-6, 1.0, std)
        return cls(tuple(float(v) for v in mean), tuple(float(v) for v in std))  # type: ignore[arg-type]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "norm.mean": np.asarray(self.mean, dtype=np.float32),
            "norm.std": np.asarray(self.std, dtype=np.float32),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "NormalizationStats":
        return cls(
            tuple(float(v) for v in arrays["norm.mean"]),  # type: ignore[arg-type]
            tuple(float(v) for v in arrays["norm.std"]),  # type: ignore[arg-type]
        )


def normalize(batch: Union[Sequence[ImageBuffer], np.ndarray], stats: NormalizationStats) -> Tensor:
    """
    ``(x / 255 − mean) / std`` per channel, as an ``N×3×H×W`` float32 tensor.

    ``batch`` is a sequence of equally sized images or an ``N×H×W×3`` uint8 array.
    """
    if isinstance(batch, np.ndarray):
        arr = batch
    else:
        if not batch:
            raise InvalidArgumentException("cannot normalize an empty batch")
        shapes = {img.shape for img in batch}
        if len(shapes) != 1:
            raise InvalidArgumentException(f"batch images differ in size: {sorted(shapes)}")
        arr = np.stack([img.pixels for img in batch])
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise InvalidArgumentException(f"batch must be N×H×W×3, got shape {arr.shape}")
    x = arr.astype(np.float32) / np.float32(255.0)
    mean = np.asarray(stats.mean, dtype=np.float32)
    std = np.asarray(stats.std, dtype=np.float32)
    return Tensor(((x - mean) / std).transpose(0, 3, 1, 2), dtype=np.float32)
