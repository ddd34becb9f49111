"""
Named-tensor checkpoint container.

Layout (little-endian)::

    magic "DCKP" | version u32 | iteration u64 | config digest (32 bytes)
    | metadata length u32 | metadata (UTF-8 JSON, sorted keys)
    | tensor count u32
    | count × (name length u32 | name bytes | tensor in DCTN format)
    | checksum u64 (BLAKE2b-64 of everything before it)
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Tuple, Union

import numpy as np
from packaging.version import InvalidVersion, Version

from ..exceptions import CheckpointException, producer_version_exception
from ..tensor.serialization import decode_tensor, encode_tensor
from ..tensor.tensor import Tensor
from ..version import __version__

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DCKP"
CHECKPOINT_VERSION = 1
DIGEST_SIZE = 32

_HEAD = struct.Struct("<4sIQ")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

PathLike = Union[str, os.PathLike]


def checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass
class Checkpoint:
    """
    Parameters, BatchNorm running statistics, momentum buffers, class centers and
    normalization statistics by name, plus the schedule position and run metadata.
    """

    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    """Named float32 arrays, in insertion order."""
    iteration: int = 0
    """Number of completed optimizer steps."""
    config_digest: bytes = b"\x00" * DIGEST_SIZE
    """SHA-256 of the resolved run configuration."""
    metadata: Dict[str, Any] = field(default_factory=dict)
    """JSON-serializable run information: config echo, seed, producer version."""

    def __post_init__(self):
        if len(self.config_digest) != DIGEST_SIZE:
            raise CheckpointException(
                f"config digest must be {DIGEST_SIZE} bytes, got {len(self.config_digest)}"
            )

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    def put(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = np.array(value, dtype=np.float32, copy=True)

    def get(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def with_prefix(self, prefix: str) -> Dict[str, np.ndarray]:
        return {n[len(prefix):]: v for n, v in self.tensors.items() if n.startswith(prefix)}

    def encode(self) -> bytes:
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [
            _HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self.iteration),
            self.config_digest,
            _U32.pack(len(meta)),
            meta,
            _U32.pack(len(self.tensors)),
        ]
        for name, value in self.tensors.items():
            raw = name.encode("utf-8")
            parts.append(_U32.pack(len(raw)))
            parts.append(raw)
            parts.append(encode_tensor(Tensor(value, dtype=np.float32)))
        payload = b"".join(parts)
        return payload + _U64.pack(checksum(payload))

    @classmethod
    def decode(cls, buf: bytes) -> "Checkpoint":
        if len(buf) < _HEAD.size + DIGEST_SIZE + _U32.size + _U64.size:
            raise CheckpointException("truncated checkpoint header")
        magic, version, iteration = _HEAD.unpack_from(buf, 0)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointException(f"not a checkpoint (magic {magic!r})")
        if version != CHECKPOINT_VERSION:
            raise CheckpointException(
                f"checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )
        payload, trailer = buf[:-_U64.size], buf[-_U64.size:]
        if _U64.unpack(trailer)[0] != checksum(payload):
            raise CheckpointException("checkpoint digest mismatch: file is corrupted or truncated")

        offset = _HEAD.size
        digest = payload[offset : offset + DIGEST_SIZE]
        offset += DIGEST_SIZE
        try:
            (meta_len,) = _U32.unpack_from(payload, offset)
            offset += _U32.size
            metadata = json.loads(payload[offset : offset + meta_len].decode("utf-8"))
            offset += meta_len
            (count,) = _U32.unpack_from(payload, offset)
            offset += _U32.size
            tensors: Dict[str, np.ndarray] = {}
            for _ in range(count):
                (name_len,) = _U32.unpack_from(payload, offset)
                offset += _U32.size
                name = payload[offset : offset + name_len].decode("utf-8")
                offset += name_len
                tensor, offset = decode_tensor(payload, offset)
                tensors[name] = tensor.data
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointException(f"malformed checkpoint body: {e}") from e
        if offset != len(payload):
            raise CheckpointException(f"{len(payload) - offset} unexpected trailing bytes in checkpoint")

        producer = metadata.get("producer_version")
        if producer:
            try:
                produced = Version(producer)
            except (InvalidVersion, TypeError) as e:
                raise producer_version_exception(producer, "is not a valid version") from e
            if produced.major > Version(__version__).major:
                raise producer_version_exception(producer, f"is newer than this reader ({__version__})")
        return cls(tensors=tensors, iteration=iteration, config_digest=digest, metadata=metadata)

    def digest(self) -> str:
        """SHA-256 of the encoded checkpoint, hex."""
        return hashlib.sha256(self.encode()).hexdigest()


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> Path:
    """Write ``checkpoint`` to ``path`` (atomically, through a temporary sibling file)."""
    path = Path(path)
    checkpoint.metadata.setdefault("producer_version", __version__)
    data = checkpoint.encode()
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        raise CheckpointException(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} (iteration {checkpoint.iteration}, {len(checkpoint)} tensors)")
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointException(f"cannot read checkpoint {path}: {e}") from e
    try:
        return Checkpoint.decode(data)
    except CheckpointException as e:
        raise CheckpointException(f"{path}: {e}") from e
