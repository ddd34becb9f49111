from .gradcheck import GradcheckReport, finite_diff_check
from .ops import (
    add,
    as_tensor,
    elementwise,
    matmul,
    mean,
    multiply,
    reshape,
    scale,
    square,
    subtract,
    transpose,
)
from .ops import sum as tensor_sum
from .serialization import decode_tensor, encode_tensor, read_tensor, write_tensor
from .tensor import (
    DEFAULT_DTYPE,
    Node,
    Tape,
    Tensor,
    active_tape,
    apply_op,
    backward,
    set_debug_checks,
)

__all__ = [
    "DEFAULT_DTYPE",
    "GradcheckReport",
    "Node",
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "apply_op",
    "as_tensor",
    "backward",
    "decode_tensor",
    "elementwise",
    "encode_tensor",
    "finite_diff_check",
    "matmul",
    "mean",
    "multiply",
    "read_tensor",
    "reshape",
    "scale",
    "set_debug_checks",
    "square",
    "subtract",
    "tensor_sum",
    "transpose",
    "write_tensor",
]
