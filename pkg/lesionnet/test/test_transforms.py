"""
Tests for image buffers, preprocessing, normalization and the augmentation transforms.
"""

import numpy as np
import pytest

from lesionnet.datapipe import (
    IDENTITY,
    ImageBuffer,
    NormalizationStats,
    TransformDescriptor,
    apply_transform,
    center_square_crop,
    decode_image,
    draw_descriptor,
    draw_descriptors,
    load_image,
    normalize,
    preprocess,
    resize_224,
    save_image,
)
from lesionnet.datapipe.synthetic import shapes_dataset
from lesionnet.exceptions import ImageDecodeException, InvalidArgumentException


def _image(h: int = 6, w: int = 8, seed: int = 0) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def test_image_buffer_validation():
    """Images are H×W×3 uint8."""
    with pytest.raises(InvalidArgumentException):
        ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(InvalidArgumentException):
        ImageBuffer(np.zeros((4, 4, 3), dtype=np.float32))


def test_center_square_crop():
    """The crop is the centered min(H, W) square."""
    img = _image(3, 5)
    crop = center_square_crop(img)
    assert crop.shape == (3, 3)
    np.testing.assert_array_equal(crop.pixels, img.pixels[:, 1:4])


def test_preprocess_and_resize():
    """Preprocessing always yields the requested square."""
    assert resize_224(_image(10, 20)).shape == (224, 224)
    assert preprocess(_image(40, 30), 32).shape == (32, 32)
    img = _image(32, 32)
    assert preprocess(img, 32).equals(img)


@pytest.mark.parametrize("suffix", [".raw", ".png"])
def test_save_and_load_are_lossless(tmp_path, suffix):
    """Raw and PNG files reproduce the samples exactly."""
    img = _image(5, 7)
    path = save_image(img, tmp_path / f"img{suffix}")
    assert load_image(path).equals(img)


def test_decode_failures(tmp_path):
    """Unreadable or undecodable files raise ImageDecodeException."""
    with pytest.raises(ImageDecodeException):
        decode_image(b"definitely not an image")
    with pytest.raises(ImageDecodeException):
        decode_image(b"\x02\x00\x00\x00\x02\x00\x00\x00\x01", raw=True)
    with pytest.raises(ImageDecodeException):
        load_image(tmp_path / "missing.png")


def test_normalization():
    """Statistics from a set of images centre and scale that set."""
    _, images, _ = shapes_dataset(2, size=(16, 16), seed=0)
    stats = NormalizationStats.from_images(images)
    x = normalize(images, stats)
    assert x.shape == (14, 3, 16, 16)
    assert x.dtype == np.float32
    np.testing.assert_allclose(x.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-4)
    np.testing.assert_allclose(x.data.std(axis=(0, 2, 3)), 1.0, atol=1e-3)
    restored = NormalizationStats.from_arrays(stats.state_arrays())
    np.testing.assert_allclose(restored.mean, stats.mean, rtol=1e-6)


def test_constant_channel_gets_unit_std():
    """A channel without variation is scaled by 1."""
    img = ImageBuffer(np.full((4, 4, 3), 128, dtype=np.uint8))
    stats = NormalizationStats.from_images([img])
    assert stats.std == (1.0, 1.0, 1.0)
    with pytest.raises(InvalidArgumentException):
        NormalizationStats.from_images([])


def test_normalize_rejects_mixed_sizes():
    """All images of a batch must share one size."""
    with pytest.raises(InvalidArgumentException):
        normalize([_image(4, 4), _image(5, 5)], NormalizationStats())


def test_flips_and_right_angle_rotations_are_exact():
    """Flips are involutions and four quarter turns are the identity."""
    img = _image(5, 7)
    hflip = TransformDescriptor("hflip")
    vflip = TransformDescriptor("vflip")
    assert apply_transform(apply_transform(img, hflip), hflip).equals(img)
    assert apply_transform(apply_transform(img, vflip), vflip).equals(img)
    np.testing.assert_array_equal(apply_transform(img, hflip).pixels, img.pixels[:, ::-1])

    quarter = TransformDescriptor("rotation", angle=90.0)
    turned = apply_transform(img, quarter)
    assert turned.shape == (7, 5)
    for _ in range(3):
        turned = apply_transform(turned, quarter)
    assert turned.equals(img)
    half = apply_transform(img, TransformDescriptor("rotation", angle=180.0))
    np.testing.assert_array_equal(half.pixels, img.pixels[::-1, ::-1])


def test_small_rotation_and_affine_keep_the_canvas():
    """Non-right-angle rotations and affine maps keep the image size."""
    img = _image(9, 11)
    assert apply_transform(img, TransformDescriptor("rotation", angle=12.5)).shape == (9, 11)
    matrix = (1.05, 0.05, 0.02, -0.03, 0.95, -0.01)
    assert apply_transform(img, TransformDescriptor("affine", matrix=matrix)).shape == (9, 11)
    identity_affine = TransformDescriptor("affine", matrix=(1.0, 0.0, 0.0, 0.0, 1.0, 0.0))
    assert apply_transform(img, identity_affine).equals(img)
    assert apply_transform(img, IDENTITY).equals(img)


def test_degenerate_affine_is_rejected():
    """A singular matrix cannot be applied."""
    bad = TransformDescriptor("affine", matrix=(1.0, 2.0, 0.0, 0.5, 1.0, 0.0))
    with pytest.raises(InvalidArgumentException):
        apply_transform(_image(), bad)


def test_descriptors_are_reproducible():
    """Slot 0 is the identity and each slot depends only on seed, id and slot."""
    assert draw_descriptor(0, "ISIC_1", 0) == IDENTITY
    first = draw_descriptors(5, "ISIC_1", 40)
    assert first == draw_descriptors(5, "ISIC_1", 40)
    assert draw_descriptors(5, "ISIC_1", 10) == first[:10]
    assert first != draw_descriptors(6, "ISIC_1", 40)
    assert {d.kind for d in first[1:]} <= {"rotation", "hflip", "vflip", "affine"}
    for d in first:
        assert TransformDescriptor.parse(d.to_text()) == d
        if d.kind == "rotation" and d.angle not in (90.0, 180.0, 270.0):
            assert abs(d.angle) <= 30.0
    with pytest.raises(InvalidArgumentException):
        draw_descriptors(5, "ISIC_1", 0)


def test_descriptor_parsing_errors():
    """Unknown kinds and bad arguments are rejected."""
    with pytest.raises(InvalidArgumentException):
        TransformDescriptor.parse("shear(3)")
    with pytest.raises(InvalidArgumentException):
        TransformDescriptor.parse("rotation(abc)")
    with pytest.raises(InvalidArgumentException):
        TransformDescriptor.parse("affine(1,2)")


if __name__ == "__main__":
    pytest.main([__file__])
