"""
Binary tensor container.

Layout (little-endian): magic ``DCTN``, version u32, rank u32, one u64 per dimension,
then the raw 32-bit reals in row-major order.
"""

import struct
from typing import BinaryIO, Tuple

import numpy as np

from ..exceptions import CheckpointException
from .tensor import Tensor

TENSOR_MAGIC = b"DCTN"
TENSOR_VERSION = 1

_HEADER = struct.Struct("<4sII")
_DIM = struct.Struct("<Q")


def encode_tensor(tensor: Tensor) -> bytes:
    """Encode a tensor; values are stored as 32-bit reals."""
    data = np.ascontiguousarray(tensor.data, dtype="<f4")
    parts = [_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, data.ndim)]
    parts.extend(_DIM.pack(n) for n in data.shape)
    parts.append(data.tobytes(order="C"))
    return b"".join(parts)


def decode_tensor(buf: bytes, offset: int = 0) -> Tuple[Tensor, int]:
    """
    Decode one tensor starting at ``offset``.

    :return: the tensor and the offset just past it
    """
    if len(buf) - offset < _HEADER.size:
        raise CheckpointException("truncated tensor header")
    magic, version, rank = _HEADER.unpack_from(buf, offset)
    if magic != TENSOR_MAGIC:
        raise CheckpointException(f"bad tensor magic {magic!r}")
    if version != TENSOR_VERSION:
        raise CheckpointException(
            f"unsupported tensor container version {version} (expected {TENSOR_VERSION})"
        )
    offset += _HEADER.size
    if len(buf) - offset < rank * _DIM.size:
        raise CheckpointException("truncated tensor dimensions")
    shape = tuple(_DIM.unpack_from(buf, offset + i * _DIM.size)[0] for i in range(rank))
    offset += rank * _DIM.size
    nbytes = int(np.prod(shape, dtype=np.int64)) * 4
    if len(buf) - offset < nbytes:
        raise CheckpointException(
            f"truncated tensor data: need {nbytes} bytes, {len(buf) - offset} available"
        )
    data = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=offset)
    tensor = Tensor(data.astype(np.float32).reshape(shape), dtype=np.float32)
    return tensor, offset + nbytes


def write_tensor(stream: BinaryIO, tensor: Tensor) -> None:
    stream.write(encode_tensor(tensor))


def read_tensor(stream: BinaryIO) -> Tensor:
    tensor, _ = decode_tensor(stream.read())
    return tensor
