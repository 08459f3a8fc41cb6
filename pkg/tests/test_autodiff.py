from __future__ import annotations

import numpy as np
import pytest

from autodiff import GradTape, Tensor, backward, grad_check, grad_check_report, ops
from utils.errors import DomainError, GradCheckError, NonFiniteError, ShapeError, TapeError


def test_product_rule():
    with GradTape() as tape:
        x = tape.watch(Tensor([1.0, 2.0, 3.0]))
        y = (x * x).sum()
    grads = backward(tape, y)
    np.testing.assert_array_equal(grads[x], [2.0, 4.0, 6.0])


def test_broadcast_gradient_is_summed_back():
    with GradTape() as tape:
        a = tape.watch(Tensor(np.ones((2, 3))))
        b = tape.watch(Tensor([1.0, 2.0, 3.0]))
        y = (a * b).sum()
    grads = backward(tape, y)
    np.testing.assert_array_equal(grads[a], [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(grads[b], [2.0, 2.0, 2.0])


def test_shared_input_accumulates():
    with GradTape() as tape:
        x = tape.watch(Tensor(3.0))
        y = x * x + x * 2.0 + ops.exp(x * 0.0)
    assert backward(tape, y)[x].item() == pytest.approx(8.0)


def test_max_routes_gradient_to_argmax():
    with GradTape() as tape:
        x = tape.watch(Tensor([[0.1, 0.7, 0.3], [0.9, 0.2, 0.4]]))
        y = x.max(axis=1).sum()
    np.testing.assert_array_equal(backward(tape, y)[x], [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


def test_unused_watched_tensor_gets_zeros():
    with GradTape() as tape:
        x = tape.watch(Tensor([1.0, 2.0]))
        unused = tape.watch(Tensor(np.ones((2, 2))))
        y = x.sum()
    grads = backward(tape, y)
    np.testing.assert_array_equal(grads[unused], np.zeros((2, 2)))


def test_untracked_tensor_is_rejected():
    with GradTape() as tape:
        x = tape.watch(Tensor(1.0))
        y = x * 2.0
    grads = backward(tape, y)
    with pytest.raises(TapeError, match="not on tape"):
        grads[Tensor(1.0)]


def test_second_backward_is_rejected():
    with GradTape() as tape:
        x = tape.watch(Tensor(2.0))
        y = x * x
    backward(tape, y)
    with pytest.raises(TapeError):
        backward(tape, y)
    with pytest.raises(TapeError):
        with tape:
            pass


def test_backward_needs_scalar():
    with GradTape() as tape:
        x = tape.watch(Tensor([1.0, 2.0]))
        y = x * 3.0
    with pytest.raises(TapeError, match="scalar"):
        backward(tape, y)


def test_stop_gradient_cuts_the_path():
    with GradTape() as tape:
        x = tape.watch(Tensor([1.5, -2.0]))
        y = (ops.stop_gradient(x) * x).sum()
    np.testing.assert_array_equal(backward(tape, y)[x], [1.5, -2.0])


def test_operations_outside_a_tape_are_plain_values():
    y = ops.tanh(Tensor([0.0, 1.0])) + 1.0
    np.testing.assert_allclose(y.data, [1.0, 1.0 + np.tanh(1.0)])


def test_tensors_are_read_only():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


@pytest.mark.parametrize("value", [np.nan, np.inf, -np.inf])
def test_non_finite_input_is_rejected(value):
    with pytest.raises(NonFiniteError):
        Tensor([1.0, value])


def test_log_domain_names_the_index():
    with pytest.raises(DomainError) as info:
        ops.log(Tensor([1.0, 2.0, 0.0]))
    assert info.value.index == 2


def test_division_by_zero():
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])


def test_shape_errors():
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ShapeError):
        ops.split_rows(Tensor(np.ones((4, 2))), [1, 2])


def test_normalize_rows_fallback():
    out = ops.normalize_rows(Tensor([[0.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 4.0]]), fallback=np.array([1.0, 0, 0, 0]))
    np.testing.assert_allclose(out.data, [[1.0, 0.0, 0.0, 0.0], [0.0, 0.6, 0.0, 0.8]])
    with pytest.raises(DomainError):
        ops.normalize_rows(Tensor([[0.0, 0.0]]))


def test_softmax_rows_sum_to_one():
    y = ops.softmax(Tensor(np.random.default_rng(0).normal(size=(3, 7)) * 10.0))
    np.testing.assert_allclose(y.data.sum(axis=1), 1.0, atol=1e-12)


def test_layer_norm_without_affine_is_standardized():
    y = ops.layer_norm(Tensor(np.random.default_rng(1).normal(2.0, 3.0, size=(4, 16)))).data
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.std(axis=1), 1.0, atol=1e-3)


def test_grad_check_smooth_composite():
    x = np.random.default_rng(2).normal(size=(3, 4))
    assert grad_check(lambda t: (ops.tanh(t) * ops.sigmoid(t * 2.0)).sum(), x) < 1e-6


def test_grad_check_dict_inputs_report():
    rng = np.random.default_rng(3)
    inputs = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(3, 2))}
    result = grad_check_report(lambda t: ops.softplus(ops.matmul(t["a"], t["b"])).sum(), inputs)
    assert result.max_rel_error < 1e-6
    assert result.coordinates == 12


def test_grad_check_flags_a_kink():
    with pytest.raises(GradCheckError, match="not differentiable"):
        grad_check(lambda t: ops.absolute(t).sum(), np.array([0.0]))
