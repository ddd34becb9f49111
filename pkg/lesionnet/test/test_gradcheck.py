"""
Tests for finite-difference gradient checking and the layer/loss check suite.
"""

import numpy as np
import pytest

from lesionnet.exceptions import InvalidArgumentException, NonDeterministicFunctionException
from lesionnet.gradcheck_suite import LAYER_CASES, LOSS_CASES, cases, format_gradcheck_table, run_gradcheck_suite
from lesionnet.tensor import Tensor, apply_op, finite_diff_check, multiply, scale, square, tensor_sum


def test_smooth_function_passes_in_double_precision():
    """A correct gradient agrees with central differences to 1e-6 in 64-bit."""
    x = Tensor(np.array([[0.3, -1.2], [2.0, 0.7]]), requires_grad=True, dtype=np.float64)
    y = Tensor(np.array([[1.5, 0.2], [-0.4, 1.1]]), requires_grad=True, dtype=np.float64)

    def f(a, b):
        return tensor_sum(multiply(square(a), b))

    report = finite_diff_check(f, [x, y], step=1e-4, tol=1e-6)
    assert report.passed
    assert report.elements == 8
    assert len(report.per_input) == 2
    np.testing.assert_array_equal(x.data, [[0.3, -1.2], [2.0, 0.7]])


def test_wrong_backward_is_detected():
    """A backward rule that is off by a factor fails the check."""

    def bad_square(t: Tensor) -> Tensor:
        return apply_op("bad_square", (t,), t.data * t.data, lambda g: (3 * g * t.data,))

    x = Tensor(np.array([0.5, -1.0, 2.0]), dtype=np.float64)
    report = finite_diff_check(lambda t: tensor_sum(bad_square(t)), x, step=1e-4)
    assert not report.passed
    assert report.max_rel_error > 0.1


def test_non_deterministic_function_is_rejected():
    """Two different values at the same point raise NonDeterministicFunctionException."""
    calls = [0]

    def f(t: Tensor) -> Tensor:
        calls[0] += 1
        return tensor_sum(scale(t, float(calls[0])))

    with pytest.raises(NonDeterministicFunctionException):
        finite_diff_check(f, Tensor(np.ones(3), dtype=np.float64))


def test_step_must_be_positive():
    """A non-positive step is rejected."""
    with pytest.raises(InvalidArgumentException):
        finite_diff_check(lambda t: tensor_sum(t), Tensor(np.ones(2)), step=0.0)


def test_suite_passes_for_every_case():
    """Every layer and loss passes at 1e-3 on random shapes in 64-bit."""
    rows = run_gradcheck_suite("all", seed=3, dtype=np.float64, draws=1)
    assert len(rows) == len(LAYER_CASES) + len(LOSS_CASES)
    assert len(rows) >= 20
    failed = [(r.case, r.max_rel_error) for r in rows if not r.passed]
    assert failed == []


def test_suite_is_reproducible():
    """The same seed draws the same shapes."""
    first = run_gradcheck_suite("losses", seed=11, draws=2)
    second = run_gradcheck_suite("losses", seed=11, draws=2)
    assert [r.shapes for r in first] == [r.shapes for r in second]
    assert [r.max_rel_error for r in first] == [r.max_rel_error for r in second]


def test_scopes():
    """Scopes select layers, losses or both; anything else is rejected."""
    assert set(cases("layers")) == set(LAYER_CASES)
    assert set(cases("losses")) == set(LOSS_CASES)
    assert len(cases("all")) == len(LAYER_CASES) + len(LOSS_CASES)
    with pytest.raises(InvalidArgumentException):
        cases("everything")  # type: ignore[arg-type]


def test_table_reports_pass_count():
    """The summary line counts passing rows."""
    rows = run_gradcheck_suite("losses", seed=0, draws=1)
    table = format_gradcheck_table(rows)
    assert table.splitlines()[-1] == f"{len(rows)}/{len(rows)} passed"
    assert "softmax_cross_entropy" in table


if __name__ == "__main__":
    pytest.main([__file__])
