"""
SGD with momentum and coupled weight decay, and the step learning-rate schedule.
"""

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from attrs import define, field

from ..exceptions import ConfigValidationException, InvalidArgumentException
from ..nn import Module, Parameter

logger = logging.getLogger(__name__)

MOMENTUM_PREFIX = "momentum."


@define(frozen=True)
class OptimizerConfig:
    """Optimizer, schedule and batching settings of a training run."""

    base_lr: float = field(default=0.01, metadata={"help": "initial learning rate"})
    momentum: float = field(default=0.9, metadata={"help": "SGD momentum, in [0, 1)"})
    weight_decay: float = field(default=1e-4, metadata={"help": "coupled L2 weight decay"})
    lr_step: int = field(default=20000, metadata={"help": "iterations between learning-rate drops"})
    lr_factor: float = field(default=0.1, metadata={"help": "learning-rate multiplier at each drop, in (0, 1)"})
    max_iter: int = field(default=75000, metadata={"help": "total optimizer steps"})
    batch_size: int = field(default=32, metadata={"help": "images per mini-batch"})
    log_every: int = field(default=100, metadata={"help": "iterations between progress log lines"})
    checkpoint_every: int = field(default=5000, metadata={"help": "iterations between checkpoints (0 disables)"})

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        problems = []
        if not self.base_lr > 0:
            problems.append(f"optim.base_lr must be > 0, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            problems.append(f"optim.momentum must be in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            problems.append(f"optim.weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr_step < 1:
            problems.append(f"optim.lr_step must be >= 1, got {self.lr_step}")
        if not 0.0 < self.lr_factor < 1.0:
            problems.append(f"optim.lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.max_iter < 0:
            problems.append(f"optim.max_iter must be >= 0, got {self.max_iter}")
        if self.batch_size < 1:
            problems.append(f"optim.batch_size must be >= 1, got {self.batch_size}")
        if self.log_every < 1:
            problems.append(f"optim.log_every must be >= 1, got {self.log_every}")
        if self.checkpoint_every < 0:
            problems.append(f"optim.checkpoint_every must be >= 0, got {self.checkpoint_every}")
        return problems

    def lr_drops(self) -> int:
        """Number of learning-rate drops within the run."""
        return (self.max_iter - 1) // self.lr_step if self.max_iter > 0 else 0


def lr_at(iteration: int, cfg: OptimizerConfig) -> float:
    """``base_lr · lr_factor^floor(iteration / lr_step)`` for ``0 <= iteration < max_iter``."""
    if not 0 <= iteration < cfg.max_iter:
        raise InvalidArgumentException(f"iteration {iteration} outside [0, {cfg.max_iter})")
    lr = cfg.base_lr * cfg.lr_factor ** (iteration // cfg.lr_step)
    # 15 significant digits: 0.01 · 0.1² is exactly 1e-4
    return float(f"{lr:.15g}")


def sgd_step(
    params: Mapping[str, Parameter],
    grads: Mapping[str, Optional[np.ndarray]],
    momentum_buffers: Dict[str, np.ndarray],
    lr: float,
    cfg: OptimizerConfig,
) -> None:
    """
    One in-place update of every parameter in ``params``::

        g   = grad + weight_decay · param
        buf = momentum · buf + g
        p   = p − lr · buf

    Missing buffers start at zero.

    :raises InvalidArgumentException: if a parameter has no gradient
    """
    for name, p in params.items():
        grad = grads.get(name)
        if grad is None:
            raise InvalidArgumentException(f"trainable parameter {name!r} has no gradient")
        dtype = p.data.dtype.type
        g = grad + dtype(cfg.weight_decay) * p.data if cfg.weight_decay else grad
        buf = momentum_buffers.get(name)
        if buf is None:
            buf = momentum_buffers[name] = np.zeros_like(p.data)
        buf *= dtype(cfg.momentum)
        buf += g
        p.data -= dtype(lr) * buf


class SGD:
    """Optimizer state for the trainable parameters of a model."""

    def __init__(self, model: Module, cfg: OptimizerConfig):
        self.model = model
        self.cfg = cfg
        self.buffers: Dict[str, np.ndarray] = {}

    def params(self) -> Dict[str, Parameter]:
        return dict(self.model.trainable_parameters())

    def step(self, lr: float) -> None:
        params = self.params()
        sgd_step(params, {n: p.grad for n, p in params.items()}, self.buffers, lr, self.cfg)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {f"{MOMENTUM_PREFIX}{n}": b for n, b in self.buffers.items()}

    def load_state(self, arrays: Iterable[Tuple[str, np.ndarray]]) -> int:
        params = self.params()
        loaded = 0
        for name, value in arrays:
            if not name.startswith(MOMENTUM_PREFIX):
                continue
            pname = name[len(MOMENTUM_PREFIX):]
            if pname not in params:
                logger.warning(f"Ignoring momentum buffer for unknown or frozen parameter {pname}")
                continue
            self.buffers[pname] = np.array(value, dtype=params[pname].dtype).reshape(params[pname].shape)
            loaded += 1
        return loaded
