"""Reverse-mode engine: values, gradients vs central differences, determinism."""

import numpy as np
import pytest

from gradcheck import assert_grads_match
from hypersam.nn import tensor as T
from hypersam.nn.tensor import Tensor, no_grad


def rand_param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_sum_grad_is_ones():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    loss = T.tensor_sum(x)
    loss.backward()
    assert np.array_equal(x.grad, np.ones(3))


def test_add_broadcast_grad_shapes():
    rng = np.random.default_rng(0)
    a = rand_param(rng, 3, 4)
    b = rand_param(rng, 4)
    loss = T.tensor_sum(T.mul(T.add(a, b), 2.0))
    loss.backward()
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    assert np.allclose(b.grad, 6.0)  # summed over the broadcast axis


@pytest.mark.parametrize("op", ["mul", "div", "sub", "matmul"])
def test_binary_op_grads(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a = rand_param(rng, 4, 5)
    b = rand_param(rng, 5, 3) if op == "matmul" else rand_param(rng, 4, 5)
    if op == "div":
        b.data = b.data + 3.0  # keep away from zero
    fn = lambda: T.tensor_sum(T.power(getattr(T, op)(a, b), 2.0))
    assert_grads_match(fn, [a, b])


@pytest.mark.parametrize("name", ["exp", "tanh", "softplus", "absolute"])
def test_unary_op_grads(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    x = rand_param(rng, 6)
    fn = lambda: T.tensor_sum(T.power(getattr(T, name)(x), 2.0))
    assert_grads_match(fn, [x])


def test_log_sqrt_grads_on_positive_inputs():
    rng = np.random.default_rng(7)
    x = Tensor(rng.uniform(0.5, 2.0, size=5), requires_grad=True)
    assert_grads_match(lambda: T.tensor_sum(T.log(x)), [x])
    assert_grads_match(lambda: T.tensor_sum(T.sqrt(x)), [x])


def test_batched_matmul_grads():
    rng = np.random.default_rng(11)
    a = rand_param(rng, 2, 3, 4)
    b = rand_param(rng, 4, 5)
    fn = lambda: T.tensor_sum(T.power(T.matmul(a, b), 2.0))
    assert_grads_match(fn, [a, b])


def test_max_min_clip_grads():
    rng = np.random.default_rng(13)
    a = rand_param(rng, 8)
    b = rand_param(rng, 8)
    assert_grads_match(lambda: T.tensor_sum(T.maximum(a, b)), [a, b])
    assert_grads_match(lambda: T.tensor_sum(T.minimum(a, b)), [a, b])
    assert_grads_match(lambda: T.tensor_sum(T.clip(a, -0.5, 0.5)), [a])


def test_take_scatter_adds_repeated_indices():
    x = Tensor(np.zeros(4), requires_grad=True)
    picked = T.take(x, np.array([1, 1, 3]))
    T.tensor_sum(picked).backward()
    assert np.array_equal(x.grad, np.array([0.0, 2.0, 0.0, 1.0]))


def test_concatenate_and_stack_grads():
    rng = np.random.default_rng(17)
    a = rand_param(rng, 2, 3)
    b = rand_param(rng, 2, 3)
    assert_grads_match(lambda: T.tensor_sum(T.power(T.concatenate([a, b], axis=1), 2.0)), [a, b])
    assert_grads_match(lambda: T.tensor_sum(T.power(T.stack([a, b], axis=0), 2.0)), [a, b])


def test_softmax_rows_sum_to_one_and_grads():
    rng = np.random.default_rng(19)
    x = rand_param(rng, 5, 7)
    s = T.softmax(x, axis=-1)
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-9)
    assert (s.data >= 0).all()
    w = rng.standard_normal((5, 7))  # fixed mixing to make the loss non-trivial
    assert_grads_match(lambda: T.tensor_sum(T.mul(T.softmax(x, axis=-1), w)), [x])


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(23)
    x = Tensor(rng.standard_normal((3, 4)))
    assert np.allclose(T.log_softmax(x).data, np.log(T.softmax(x).data), atol=1e-12)


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = T.mul(x, 2.0)
    assert not y.requires_grad and y._parents == ()


def test_grad_accumulates_across_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = T.add(T.mul(x, 3.0), T.mul(x, x))  # 3x + x^2 -> grad 3 + 2x = 7
    y.backward()
    assert np.allclose(x.grad, [7.0])


def test_determinism_bit_identical():
    rng = np.random.default_rng(29)
    w = rng.standard_normal((4, 4))
    x = rng.standard_normal((5, 4))

    def run():
        return T.tanh(T.matmul(Tensor(x), Tensor(w))).data.tobytes()

    assert run() == run()
