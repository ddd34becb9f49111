import math
from typing import Sequence

import numpy as np

from ..exceptions import InvalidArgumentException
from ..tensor import DEFAULT_DTYPE, Tensor


def he_init(shape: Sequence[int], fan_in: int, seed: int, dtype=DEFAULT_DTYPE) -> Tensor:
    """
    He-normal initialization: samples from ``normal(0, sqrt(2 / fan_in))``.

    Deterministic for a fixed seed.
    """
    if fan_in < 1:
        raise InvalidArgumentException(f"fan_in must be >= 1, got {fan_in}")
    rng = np.random.Generator(np.random.PCG64(seed))
    std = math.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=tuple(shape)), dtype=dtype)


def conv_fan_in(weight_shape: Sequence[int]) -> int:
    """Fan-in of a ``out × in × kh × kw`` kernel or an ``out × in`` matrix."""
    return int(np.prod(weight_shape[1:]))
