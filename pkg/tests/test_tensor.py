import threading

import numpy as np
import pytest

from gfss.numcore import (
    Tensor,
    add,
    clamp_min,
    concat,
    grad_enabled,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    slice_axis,
    tensor_mean,
    tensor_sum,
    transpose,
)


def test_tensor_is_float32():
    t = Tensor([1, 2, 3])
    assert t.data.dtype == np.float32
    assert t.shape == (3,)


def test_add_and_grad_accumulation():
    a = Tensor([1.0, 2.0], requires_grad=True)
    out = tensor_sum(add(a, a))
    out.backward()
    assert np.allclose(a.grad, [2.0, 2.0])


def test_neg():
    a = Tensor([1.0, -2.0], requires_grad=True)
    tensor_sum(neg(a)).backward()
    assert np.allclose(a.grad, [-1.0, -1.0])


def test_mul_hand_case():
    a = Tensor([2.0, 3.0], requires_grad=True)
    b = Tensor([5.0, 7.0], requires_grad=True)
    tensor_sum(mul(a, b)).backward()
    assert np.allclose(a.grad, [5.0, 7.0])
    assert np.allclose(b.grad, [2.0, 3.0])


def test_add_broadcast_bias():
    x = Tensor(np.ones((4, 3), np.float32), requires_grad=True)
    b = Tensor(np.zeros(3, np.float32), requires_grad=True)
    tensor_sum(add(x, b)).backward()
    assert b.grad.shape == (3,)
    assert np.allclose(b.grad, [4.0, 4.0, 4.0])


def test_matmul_2d():
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    b = Tensor([[3.0], [4.0]], requires_grad=True)
    out = matmul(a, b)
    assert out.shape == (1, 1)
    assert float(out.data[0, 0]) == pytest.approx(11.0)
    out.backward(np.ones((1, 1)))
    assert np.allclose(a.grad, [[3.0, 4.0]])
    assert np.allclose(b.grad, [[1.0], [2.0]])


def test_matmul_batched():
    a = Tensor(np.arange(12, dtype=np.float32).reshape(2, 2, 3))
    b = Tensor(np.ones((2, 3, 4), np.float32))
    out = matmul(a, b)
    assert out.shape == (2, 2, 4)
    expect = a.data @ b.data
    assert np.allclose(out.data, expect)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_relu_forward_backward():
    a = Tensor([-1.0, 0.5, 2.0], requires_grad=True)
    out = relu(a)
    assert np.allclose(out.data, [0.0, 0.5, 2.0])
    tensor_sum(out).backward()
    assert np.allclose(a.grad, [0.0, 1.0, 1.0])


def test_clamp_min():
    a = Tensor([-2.0, 0.25], requires_grad=True)
    out = clamp_min(a, 1e-1)
    assert np.allclose(out.data, [0.1, 0.25])
    tensor_sum(out).backward()
    assert np.allclose(a.grad, [0.0, 1.0])


def test_log():
    a = Tensor([1.0, np.e], requires_grad=True)
    out = log(a)
    assert np.allclose(out.data, [0.0, 1.0], atol=1e-6)
    tensor_sum(out).backward()
    assert np.allclose(a.grad, [1.0, 1.0 / np.e], atol=1e-6)


def test_reshape_transpose_roundtrip():
    a = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    out = transpose(reshape(a, (3, 2)), (1, 0))
    assert out.shape == (2, 3)
    tensor_sum(mul(out, out)).backward()
    assert a.grad.shape == (2, 3)
    assert np.allclose(a.grad, 2 * a.data)


def test_concat_and_slice_axis_inverse():
    a = Tensor(np.ones((2, 3), np.float32), requires_grad=True)
    b = Tensor(np.full((2, 2), 5.0, np.float32), requires_grad=True)
    joined = concat([a, b], axis=1)
    assert joined.shape == (2, 5)
    back = slice_axis(joined, axis=1, start=3, stop=5)
    assert np.allclose(back.data, b.data)
    tensor_sum(back).backward()
    assert np.allclose(a.grad, 0.0)
    assert np.allclose(b.grad, 1.0)


def test_sum_and_mean_with_axis():
    a = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    s = tensor_sum(a, axis=0)
    assert np.allclose(s.data, [3.0, 5.0, 7.0])
    m = tensor_mean(a, axis=(0, 1))
    assert float(m.data) == pytest.approx(2.5)
    m.backward()
    assert np.allclose(a.grad, 1.0 / 6.0)


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        add(a, a).backward()


def test_no_grad_blocks_graph():
    a = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = mul(a, a)
    assert out._parents == ()
    assert not out.requires_grad
    assert grad_enabled()


def test_no_grad_is_thread_local():
    """One thread's inference must not stop another thread's recording."""
    seen = {}
    gate_a = threading.Event()
    gate_b = threading.Event()

    def quiet():
        with no_grad():
            gate_a.set()
            gate_b.wait(timeout=5)

    def loud():
        gate_a.wait(timeout=5)
        a = Tensor([2.0], requires_grad=True)
        out = mul(a, a)
        seen["recorded"] = out.requires_grad
        gate_b.set()

    threads = [threading.Thread(target=quiet), threading.Thread(target=loud)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert seen["recorded"] is True


def test_detach_cuts_history():
    a = Tensor([3.0], requires_grad=True)
    out = mul(a, a).detach()
    assert out._parents == ()
    assert not out.requires_grad


def test_grad_reuse_in_two_branches():
    a = Tensor([2.0], requires_grad=True)
    out = add(mul(a, a), a)  # a^2 + a -> d/da = 2a + 1
    tensor_sum(out).backward()
    assert float(a.grad[0]) == pytest.approx(5.0)
