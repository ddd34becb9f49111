from typing import Dict, Iterator, Literal, Optional, Tuple

import numpy as np

from ..exceptions import InvalidArgumentException
from ..tensor import Tensor

Mode = Literal["train", "eval"]
"""
Execution mode of a model: batch statistics and running-stat updates in ``train``,
running statistics in ``eval``.
"""


def check_mode(mode: str) -> Mode:
    if mode not in ("train", "eval"):
        raise InvalidArgumentException(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode  # type: ignore[return-value]


class Parameter(Tensor):
    """
    A learnable tensor owned by a model.

    ``trainable`` is the freeze flag: frozen parameters never require a gradient and are
    never touched by the optimizer.
    """

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True, name: Optional[str] = None, dtype=None):
        super().__init__(data, requires_grad=trainable, name=name, dtype=dtype)
        self.trainable = trainable

    def set_trainable(self, trainable: bool) -> None:
        self.trainable = trainable
        self.requires_grad = trainable
        if not trainable:
            self.grad = None


class Module:
    """
    Minimal parameter container shared by the models.

    Parameters and buffers are kept in flat, ordered name → value maps; names use dots
    (``concat_2_1.conv1.weight``). Buffers are non-learnable state such as BatchNorm
    running statistics.
    """

    def __init__(self) -> None:
        self._parameters: Dict[str, Parameter] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def register_parameter(self, name: str, param: Parameter) -> Parameter:
        if name in self._parameters:
            raise InvalidArgumentException(f"duplicate parameter name {name!r}")
        param.name = name
        self._parameters[name] = param
        return param

    def register_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._buffers:
            raise InvalidArgumentException(f"duplicate buffer name {name!r}")
        self._buffers[name] = value
        return value

    def parameter(self, name: str) -> Parameter:
        return self._parameters[name]

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        return iter(self._parameters.items())

    def trainable_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        return ((n, p) for n, p in self._parameters.items() if p.trainable)

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self._buffers.items())

    def zero_grad(self) -> None:
        for p in self._parameters.values():
            p.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """All parameters and buffers by name, parameters first."""
        state: Dict[str, np.ndarray] = {n: p.data for n, p in self._parameters.items()}
        state.update(self._buffers)
        return state

    def assign(self, name: str, value: np.ndarray) -> None:
        """Copy ``value`` into the parameter or buffer called ``name`` (same shape required)."""
        target = self._parameters[name].data if name in self._parameters else self._buffers[name]
        np.copyto(target, value.reshape(target.shape), casting="unsafe")

    def parameter_count(self, trainable_only: bool = False) -> int:
        return int(
            sum(p.size for p in self._parameters.values() if p.trainable or not trainable_only)
        )


class FeatureModel(Module):
    """
    A classifier that also exposes the features its final layer consumes.

    ``forward`` returns ``(logits N×num_classes, features N×feature_dim)``.
    """

    @property
    def num_classes(self) -> int:
        raise NotImplementedError

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    def forward(self, x: Tensor, mode: Mode = "train") -> Tuple[Tensor, Tensor]:
        raise NotImplementedError

    def __call__(self, x: Tensor, mode: Mode = "train") -> Tuple[Tensor, Tensor]:
        return self.forward(x, mode)
