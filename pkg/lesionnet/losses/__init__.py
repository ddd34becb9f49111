from .center import CenterBank, Reduction, center_loss, center_update
from .joint import LossConfig, joint_loss
from .softmax import check_labels, softmax, softmax_cross_entropy

__all__ = [
    "CenterBank",
    "LossConfig",
    "Reduction",
    "center_loss",
    "center_update",
    "check_labels",
    "joint_loss",
    "softmax",
    "softmax_cross_entropy",
]
