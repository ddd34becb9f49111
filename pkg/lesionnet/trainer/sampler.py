from typing import Optional

import numpy as np

from ..exceptions import InvalidArgumentException
from ..rng import stream


class EpochSampler:
    """
    Mini-batch indices as a pure function of the step.

    Each epoch is a fresh permutation drawn from the ``("shuffle", epoch)`` stream; the
    trailing ``len % batch_size`` items of a permutation are dropped. Resuming at step
    ``t`` therefore needs nothing but ``t``.
    """

    def __init__(self, num_items: int, batch_size: int, seed: int):
        if num_items < 1:
            raise InvalidArgumentException("cannot sample from an empty dataset")
        if batch_size < 1:
            raise InvalidArgumentException(f"batch_size must be >= 1, got {batch_size}")
        self.num_items = num_items
        self.batch_size = batch_size
        self.seed = seed
        self._epoch: Optional[int] = None
        self._perm: Optional[np.ndarray] = None

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.num_items // self.batch_size)

    def permutation(self, epoch: int) -> np.ndarray:
        if epoch != self._epoch:
            self._perm = stream(self.seed, "shuffle", epoch).permutation(self.num_items)
            self._epoch = epoch
        return self._perm  # type: ignore[return-value]

    def indices(self, step: int) -> np.ndarray:
        epoch, pos = divmod(step, self.steps_per_epoch)
        perm = self.permutation(epoch)
        return perm[pos * self.batch_size : (pos + 1) * self.batch_size]
