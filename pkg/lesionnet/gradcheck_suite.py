"""
Finite-difference checks of every differentiable layer and both losses.

Each case draws its shapes and values from ``stream(seed, "gradcheck", case, draw)`` and
reduces the layer output to a scalar through a fixed random projection, so every output
element contributes to the checked gradient. Inputs of ReLU and max pooling are kept away
from kinks and ties.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from .exceptions import InvalidArgumentException
from .losses import CenterBank, center_loss, softmax_cross_entropy
from .nn import (
    BatchNormParams,
    ConvParams,
    avg_pool,
    batch_norm,
    concat_channels,
    conv2d,
    global_avg_pool,
    linear,
    max_pool,
    relu,
    slice_channels,
)
from .rng import stream
from .tensor import (
    Tensor,
    add,
    finite_diff_check,
    matmul,
    mean,
    multiply,
    reshape,
    scale,
    square,
    subtract,
    tensor_sum,
    transpose,
)

logger = logging.getLogger(__name__)

Scope = Literal["layers", "losses", "all"]
SCOPES = ("layers", "losses", "all")

Problem = Tuple[Callable[..., Tensor], List[Tensor]]
Builder = Callable[[np.random.Generator, np.dtype], Problem]


def _t(data: np.ndarray, dtype: np.dtype) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _projected(layer: Callable[..., Tensor], out_shape: Sequence[int], rng: np.random.Generator, dtype):
    r = Tensor(rng.normal(size=tuple(out_shape)), dtype=dtype)

    def f(*xs: Tensor) -> Tensor:
        return tensor_sum(multiply(layer(*xs), r))

    return f


def _nchw(rng: np.random.Generator, low: int = 3, high: int = 6) -> Tuple[int, int, int, int]:
    return (
        int(rng.integers(1, 3)),
        int(rng.integers(1, 4)),
        int(rng.integers(low, high + 1)),
        int(rng.integers(low, high + 1)),
    )


def _away_from_zero(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    return rng.uniform(0.05, 1.5, size=tuple(shape)) * rng.choice([-1.0, 1.0], size=tuple(shape))


def _conv_case(kernel: int, stride: int, padding: int) -> Builder:
    def build(rng: np.random.Generator, dtype) -> Problem:
        n, c, h, w = _nchw(rng, low=kernel, high=kernel + 3)
        out_ch = int(rng.integers(1, 4))
        x = _t(rng.normal(size=(n, c, h, w)), dtype)
        weight = _t(rng.normal(size=(out_ch, c, kernel, kernel)) * 0.5, dtype)

        def layer(x_: Tensor, w_: Tensor) -> Tensor:
            return conv2d(x_, ConvParams(w_, stride, padding))

        out_shape = layer(x, weight).shape
        return _projected(layer, out_shape, rng, dtype), [x, weight]

    return build


def _batch_norm_case(mode: str) -> Builder:
    def build(rng: np.random.Generator, dtype) -> Problem:
        n, c, h, w = _nchw(rng)
        n = max(n, 2)
        x = _t(rng.normal(size=(n, c, h, w)), dtype)
        gamma = _t(rng.uniform(0.5, 1.5, size=c), dtype)
        beta = _t(rng.normal(size=c), dtype)
        running_mean = rng.normal(size=c).astype(dtype)
        running_var = rng.uniform(0.5, 2.0, size=c).astype(dtype)

        def layer(x_: Tensor, g_: Tensor, b_: Tensor) -> Tensor:
            params = BatchNormParams(g_, b_, running_mean, running_var, mode=mode)  # type: ignore[arg-type]
            return batch_norm(x_, params)

        return _projected(layer, x.shape, rng, dtype), [x, gamma, beta]

    return build


def _relu(rng: np.random.Generator, dtype) -> Problem:
    x = _t(_away_from_zero(rng, _nchw(rng)), dtype)
    return _projected(relu, x.shape, rng, dtype), [x]


def _max_pool(rng: np.random.Generator, dtype) -> Problem:
    shape = _nchw(rng)
    values = rng.permutation(int(np.prod(shape))).reshape(shape) * 0.05
    x = _t(values, dtype)
    return _projected(max_pool, max_pool(x).shape, rng, dtype), [x]


def _avg_pool(rng: np.random.Generator, dtype) -> Problem:
    n, c, h, w = _nchw(rng, low=1, high=3)
    x = _t(rng.normal(size=(n, c, 2 * h, 2 * w)), dtype)
    return _projected(avg_pool, (n, c, h, w), rng, dtype), [x]


def _global_avg_pool(rng: np.random.Generator, dtype) -> Problem:
    n, c, h, w = _nchw(rng)
    x = _t(rng.normal(size=(n, c, h, w)), dtype)
    return _projected(global_avg_pool, (n, c), rng, dtype), [x]


def _concat(rng: np.random.Generator, dtype) -> Problem:
    n, c, h, w = _nchw(rng)
    c2 = int(rng.integers(1, 4))
    a = _t(rng.normal(size=(n, c, h, w)), dtype)
    b = _t(rng.normal(size=(n, c2, h, w)), dtype)

    def layer(a_: Tensor, b_: Tensor) -> Tensor:
        return concat_channels([a_, b_])

    return _projected(layer, (n, c + c2, h, w), rng, dtype), [a, b]


def _slice(rng: np.random.Generator, dtype) -> Problem:
    n, c, h, w = _nchw(rng)
    c += 1
    start = int(rng.integers(0, c - 1))
    stop = int(rng.integers(start + 1, c + 1))
    x = _t(rng.normal(size=(n, c, h, w)), dtype)

    def layer(x_: Tensor) -> Tensor:
        return slice_channels(x_, start, stop)

    return _projected(layer, (n, stop - start, h, w), rng, dtype), [x]


def _linear(rng: np.random.Generator, dtype) -> Problem:
    n, d, c = (int(v) for v in rng.integers(1, 6, size=3))
    x = _t(rng.normal(size=(n, d)), dtype)
    weight = _t(rng.normal(size=(c, d)), dtype)
    bias = _t(rng.normal(size=c), dtype)
    return _projected(linear, (n, c), rng, dtype), [x, weight, bias]


def _elementwise(op: Callable[[Tensor, Tensor], Tensor]) -> Builder:
    def build(rng: np.random.Generator, dtype) -> Problem:
        rows, cols = (int(v) for v in rng.integers(1, 5, size=2))
        a = _t(rng.normal(size=(rows, cols)), dtype)
        b = _t(rng.normal(size=(1, cols)), dtype)
        return _projected(op, (rows, cols), rng, dtype), [a, b]

    return build


def _matmul(rng: np.random.Generator, dtype) -> Problem:
    m, k, n = (int(v) for v in rng.integers(1, 5, size=3))
    a = _t(rng.normal(size=(m, k)), dtype)
    b = _t(rng.normal(size=(k, n)), dtype)
    return _projected(matmul, (m, n), rng, dtype), [a, b]


def _unary(op: Callable[[Tensor], Tensor]) -> Builder:
    def build(rng: np.random.Generator, dtype) -> Problem:
        shape = tuple(int(v) for v in rng.integers(1, 5, size=3))
        x = _t(rng.normal(size=shape), dtype)
        return _projected(op, op(x).shape, rng, dtype), [x]

    return build


def _softmax_loss(rng: np.random.Generator, dtype) -> Problem:
    m = int(rng.integers(1, 9))
    logits = _t(rng.normal(size=(m, 7)) * 2.0, dtype)
    labels = rng.integers(0, 7, size=m)
    return (lambda z: softmax_cross_entropy(z, labels)), [logits]


def _center_loss_case(reduction: str) -> Builder:
    def build(rng: np.random.Generator, dtype) -> Problem:
        m, d = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        features = _t(rng.normal(size=(m, d)), dtype)
        bank = CenterBank(rng.normal(size=(7, d)).astype(dtype))
        labels = rng.integers(0, 7, size=m)
        return (lambda x: center_loss(x, labels, bank, reduction)), [features]  # type: ignore[arg-type]

    return build


LAYER_CASES: Dict[str, Builder] = {
    "conv2d_1x1": _conv_case(1, 1, 0),
    "conv2d_3x3": _conv_case(3, 1, 1),
    "conv2d_7x7_s2": _conv_case(7, 2, 3),
    "batch_norm_train": _batch_norm_case("train"),
    "batch_norm_eval": _batch_norm_case("eval"),
    "relu": _relu,
    "max_pool": _max_pool,
    "avg_pool": _avg_pool,
    "global_avg_pool": _global_avg_pool,
    "concat_channels": _concat,
    "slice_channels": _slice,
    "linear": _linear,
    "add": _elementwise(add),
    "subtract": _elementwise(subtract),
    "multiply": _elementwise(multiply),
    "matmul": _matmul,
    "scale": _unary(lambda x: scale(x, 2.5)),
    "square": _unary(square),
    "sum_axis": _unary(lambda x: tensor_sum(x, axis=1)),
    "mean": _unary(mean),
    "reshape": _unary(lambda x: reshape(x, (-1,))),
    "transpose": _unary(lambda x: transpose(x, (2, 0, 1))),
}

LOSS_CASES: Dict[str, Builder] = {
    "softmax_cross_entropy": _softmax_loss,
    "center_loss_sum": _center_loss_case("sum"),
    "center_loss_mean": _center_loss_case("mean"),
}


def cases(scope: Scope) -> Dict[str, Builder]:
    if scope not in SCOPES:
        raise InvalidArgumentException(f"scope must be one of {', '.join(SCOPES)}, got {scope!r}")
    selected: Dict[str, Builder] = {}
    if scope in ("layers", "all"):
        selected.update(LAYER_CASES)
    if scope in ("losses", "all"):
        selected.update(LOSS_CASES)
    return selected


@dataclass_json
@dataclass
class GradcheckRow:
    case: str
    draw: int
    shapes: List[List[int]]
    max_rel_error: float
    passed: bool


def run_gradcheck_suite(
    scope: Scope = "all",
    seed: int = 0,
    dtype=np.float64,
    draws: int = 2,
    tol: float = 1e-3,
    step: float = 1e-4,
) -> List[GradcheckRow]:
    """Check every case of ``scope`` on ``draws`` random shapes each."""
    dtype = np.dtype(dtype)
    rows: List[GradcheckRow] = []
    for name, build in cases(scope).items():
        for draw in range(draws):
            f, xs = build(stream(seed, "gradcheck", name, draw), dtype)
            report = finite_diff_check(f, xs, step=step, tol=tol)
            rows.append(GradcheckRow(name, draw, [list(x.shape) for x in xs], report.max_rel_error, report.passed))
            if not report.passed:
                logger.warning(f"Gradient check {name} #{draw} failed: max relative error {report.max_rel_error:.3e}")
    return rows


def format_gradcheck_table(rows: Sequence[GradcheckRow]) -> str:
    width = max([len("case")] + [len(r.case) for r in rows])
    lines = [f"{'case':<{width}}  draw  {'max_rel_error':>13}  result  shapes"]
    for r in rows:
        shapes = " ".join("x".join(str(d) for d in s) for s in r.shapes)
        lines.append(
            f"{r.case:<{width}}  {r.draw:>4}  {r.max_rel_error:>13.3e}  {'pass' if r.passed else 'FAIL':<6}  {shapes}"
        )
    passed = sum(r.passed for r in rows)
    lines.append(f"{passed}/{len(rows)} passed")
    return "\n".join(lines)
