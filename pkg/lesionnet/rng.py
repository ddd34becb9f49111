"""
Named random streams derived from one global seed.

Every stage draws from its own stream (``split``, ``plan``, ``init``, ``shuffle`` ...), so
changing how much randomness one stage consumes never shifts the draws of another.
"""

import hashlib
from typing import Union

import numpy as np

from .exceptions import InvalidArgumentException

StreamKey = Union[str, int]


def _key_words(keys: tuple[StreamKey, ...]) -> list[int]:
    words: list[int] = []
    for key in keys:
        digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
        words.extend(int.from_bytes(digest[i : i + 4], "little") for i in (0, 4))
    return words


def stream(seed: int, *keys: StreamKey) -> np.random.Generator:
    """
    Return an independent generator for ``(seed, *keys)``.

    The same seed and keys always give the same generator state.
    """
    if seed < 0:
        raise InvalidArgumentException(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key_words(keys)))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *keys: StreamKey) -> int:
    """Derive a 63-bit integer seed for ``(seed, *keys)``."""
    return int(stream(seed, *keys).integers(0, 2**63 - 1))
