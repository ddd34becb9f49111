"""
Tests for the checkpoint container.
"""

import numpy as np
import pytest

from lesionnet.exceptions import CheckpointException
from lesionnet.trainer import CHECKPOINT_MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from lesionnet.version import __version__


def _checkpoint() -> Checkpoint:
    checkpoint = Checkpoint(
        iteration=1234, config_digest=bytes(range(32)), metadata={"seed": 7, "arch.growth_rate": "32"}
    )
    checkpoint.put("conv1.conv.weight", np.arange(24, dtype=np.float64).reshape(2, 3, 2, 2) / 3.0)
    checkpoint.put("center_0", np.array([0.5, -1.5]))
    checkpoint.put("scalar", np.asarray(2.0))
    return checkpoint


def test_encode_decode():
    """Tensors, iteration, digest and metadata survive encoding."""
    original = _checkpoint()
    buf = original.encode()
    assert buf[:4] == CHECKPOINT_MAGIC
    decoded = Checkpoint.decode(buf)
    assert decoded.iteration == 1234
    assert decoded.config_digest == bytes(range(32))
    assert decoded.metadata == {"seed": 7, "arch.growth_rate": "32"}
    assert list(decoded.tensors) == ["conv1.conv.weight", "center_0", "scalar"]
    for name, value in original.items():
        assert decoded.get(name).dtype == np.float32
        np.testing.assert_array_equal(decoded.get(name), value)
    assert decoded.encode() == buf


def test_bad_magic():
    """A file that does not start with the magic is rejected."""
    buf = _checkpoint().encode()
    with pytest.raises(CheckpointException, match="not a checkpoint"):
        Checkpoint.decode(b"NOPE" + buf[4:])


def test_corruption_is_detected():
    """Flipping one byte breaks the checksum."""
    buf = bytearray(_checkpoint().encode())
    buf[len(buf) // 2] ^= 0xFF
    with pytest.raises(CheckpointException, match="digest mismatch"):
        Checkpoint.decode(bytes(buf))


def test_truncation_is_detected():
    """Truncated files are rejected."""
    buf = _checkpoint().encode()
    with pytest.raises(CheckpointException):
        Checkpoint.decode(buf[:-20])
    with pytest.raises(CheckpointException):
        Checkpoint.decode(buf[:10])


def test_newer_producer_is_rejected():
    """A checkpoint from a newer major version is refused."""
    checkpoint = Checkpoint(metadata={"producer_version": "99.0.0"})
    with pytest.raises(CheckpointException, match="newer"):
        Checkpoint.decode(checkpoint.encode())


@pytest.mark.parametrize("producer", ["not a version", "1.x", 3])
def test_malformed_producer_is_rejected(producer):
    """An unparsable producer version raises CheckpointException, not a parser error."""
    checkpoint = Checkpoint(metadata={"producer_version": producer})
    with pytest.raises(CheckpointException, match="not a valid version"):
        Checkpoint.decode(checkpoint.encode())


def test_digest_must_have_32_bytes():
    """The config digest is a SHA-256."""
    with pytest.raises(CheckpointException):
        Checkpoint(config_digest=b"short")


def test_save_and_load(tmp_path):
    """save_checkpoint records the producer version and load_checkpoint reads it back."""
    path = save_checkpoint(_checkpoint(), tmp_path / "nested" / "iter_0001234.dckp")
    assert path.exists()
    assert not path.with_name(path.name + ".tmp").exists()
    loaded = load_checkpoint(path)
    assert loaded.metadata["producer_version"] == __version__
    assert loaded.iteration == 1234
    assert len(loaded.digest()) == 64


def test_load_missing_file(tmp_path):
    """A missing file raises CheckpointException."""
    with pytest.raises(CheckpointException):
        load_checkpoint(tmp_path / "missing.dckp")


if __name__ == "__main__":
    pytest.main([__file__])
