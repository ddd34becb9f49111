from typing import List

from attrs import define, field

from ..exceptions import ConfigValidationException
from ..tensor import Tensor, add, scale


@define(frozen=True)
class LossConfig:
    """Weighting of the center loss against the softmax loss."""

    lambda_: float = field(default=0.8, metadata={"help": "center-loss weight in L = Ls + lambda*Lc"})
    alpha: float = field(default=0.5, metadata={"help": "center update rate, in (0, 1]"})
    center_reduction: str = field(default="sum", metadata={"help": "center loss over the batch: sum or mean"})

    def __attrs_post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigValidationException(problems)

    def problems(self) -> List[str]:
        problems = []
        if not self.lambda_ >= 0:
            problems.append(f"loss.lambda must be >= 0, got {self.lambda_}")
        if not 0.0 < self.alpha <= 1.0:
            problems.append(f"loss.alpha must be in (0, 1], got {self.alpha}")
        if self.center_reduction not in ("sum", "mean"):
            problems.append(f"loss.center_reduction must be sum or mean, got {self.center_reduction!r}")
        return problems


def joint_loss(ls: Tensor, lc: Tensor, cfg: LossConfig) -> Tensor:
    """``L = Ls + λ·Lc``. With ``λ = 0`` the softmax loss itself is returned."""
    if cfg.lambda_ == 0:
        return ls
    return add(ls, scale(lc, cfg.lambda_))
