import math

import numpy as np
import pytest

from gfss.numcore import (
    Tensor,
    bilinear_upsample,
    conv2d,
    cross_entropy,
    embedding,
    gelu,
    layer_norm,
    max_pool2d,
    multi_head_attention,
    softmax,
)
from gradcheck import max_rel_err
from op_suite import OP_CASES


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_gradients_match_finite_differences(name):
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(1000 * hash(name) % (2**31) + trial)
        fn, arrays = OP_CASES[name](rng)
        worst = max(worst, max_rel_err(fn, arrays, proj_seed=trial))
    assert worst < 1e-3, f"{name}: rel err {worst:.2e}"


# -- hand cases -------------------------------------------------------------


def test_softmax_uniform_rows():
    out = softmax(Tensor([[0.0, 0.0]]), axis=1)
    assert np.allclose(out.data, [[0.5, 0.5]])


def test_softmax_large_inputs_stable():
    out = softmax(Tensor([[1000.0, 1000.0]]), axis=1)
    assert np.allclose(out.data, [[0.5, 0.5]])
    assert np.isfinite(out.data).all()


def test_softmax_log3():
    out = softmax(Tensor([[0.0, math.log(3.0)]]), axis=1)
    assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-6)


def test_conv2d_all_ones_times_two():
    x = Tensor(np.ones((1, 1, 4, 4), np.float32))
    w = Tensor(np.full((1, 1, 1, 1), 2.0, np.float32))
    out = conv2d(x, w)
    assert out.shape == (1, 1, 4, 4)
    assert np.allclose(out.data, 2.0)


def test_conv2d_identity_kernel_hand_case():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], np.float32))
    w = Tensor(np.array([[[[1.0, 0.0], [0.0, 1.0]]]], np.float32))
    out = conv2d(x, w)
    assert out.shape == (1, 1, 1, 1)
    assert float(out.data[0, 0, 0, 0]) == pytest.approx(5.0)


def test_conv2d_padding_grows_output():
    x = Tensor(np.ones((1, 1, 3, 3), np.float32))
    w = Tensor(np.ones((1, 1, 3, 3), np.float32))
    assert conv2d(x, w, padding=1).shape == (1, 1, 3, 3)
    assert conv2d(x, w).shape == (1, 1, 1, 1)


def test_max_pool2d_hand_case():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]], np.float32))
    out = max_pool2d(x, 2)
    assert out.shape == (1, 1, 1, 1)
    assert float(out.data[0, 0, 0, 0]) == pytest.approx(4.0)


def test_bilinear_upsample_constant_is_constant():
    x = Tensor(np.full((1, 1, 3, 3), 7.0, np.float32))
    out = bilinear_upsample(x, 6, 6)
    assert out.shape == (1, 1, 6, 6)
    assert np.allclose(out.data, 7.0, atol=1e-5)


def test_bilinear_upsample_identity():
    x = Tensor(np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3))
    out = bilinear_upsample(x, 3, 3)
    assert np.allclose(out.data, x.data, atol=1e-6)


def test_layer_norm_statistics():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 5, 8)).astype(np.float32) * 3 + 1)
    out = layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8)))
    mean = out.data.mean(axis=-1)
    std = out.data.std(axis=-1)
    assert np.allclose(mean, 0.0, atol=1e-5)
    assert np.allclose(std, 1.0, atol=1e-3)


def test_gelu_fixed_points():
    out = gelu(Tensor([0.0, 100.0, -100.0]))
    assert float(out.data[0]) == pytest.approx(0.0, abs=1e-7)
    assert float(out.data[1]) == pytest.approx(100.0, rel=1e-6)
    assert float(out.data[2]) == pytest.approx(0.0, abs=1e-5)


def test_embedding_rows():
    table = Tensor(np.arange(12, dtype=np.float32).reshape(4, 3))
    out = embedding(table, np.array([3, 0]))
    assert np.allclose(out.data, [[9, 10, 11], [0, 1, 2]])


def test_cross_entropy_one_hot_is_zero():
    probs = np.full((1, 3, 2, 2), 1e-9, np.float32)
    labels = np.array([[[0, 1], [2, 0]]])
    for i in range(2):
        for j in range(2):
            probs[0, labels[0, i, j], i, j] = 1.0
    loss = cross_entropy(Tensor(probs), labels)
    assert float(loss.data) <= 1e-5


def test_cross_entropy_uniform_is_log_k():
    probs = np.full((1, 4, 3, 3), 0.25, np.float32)
    labels = np.zeros((1, 3, 3), np.int64)
    loss = cross_entropy(Tensor(probs), labels)
    assert float(loss.data) == pytest.approx(math.log(4.0), rel=1e-5)


def test_cross_entropy_all_ignored_raises():
    probs = np.full((1, 2, 2, 2), 0.5, np.float32)
    labels = np.full((1, 2, 2), 255, np.int64)
    with pytest.raises(ValueError):
        cross_entropy(Tensor(probs), labels)


def test_cross_entropy_ignores_masked_pixels():
    probs = np.full((1, 2, 1, 2), 0.5, np.float32)
    probs[0, :, 0, 1] = [1.0, 1e-9]  # wrong pixel, but ignored
    labels = np.array([[[0, 255]]])
    labels_full = np.array([[[0, 1]]])
    ignored = cross_entropy(Tensor(probs), labels)
    full = cross_entropy(Tensor(probs), labels_full)
    assert float(ignored.data) == pytest.approx(math.log(2.0), rel=1e-5)
    assert float(full.data) > float(ignored.data)


def test_multi_head_attention_shape_and_heads():
    rng = np.random.default_rng(3)
    q = Tensor(rng.standard_normal((2, 5, 8)).astype(np.float32))
    out = multi_head_attention(q, q, q, num_heads=2)
    assert out.shape == (2, 5, 8)
    with pytest.raises(ValueError):
        multi_head_attention(q, q, q, num_heads=3)  # 8 % 3 != 0


def test_attention_uniform_when_keys_identical():
    # identical keys -> uniform weights -> output equals mean of values
    q = Tensor(np.ones((1, 4, 4), np.float32))
    k = Tensor(np.ones((1, 4, 4), np.float32))
    v = Tensor(np.arange(16, dtype=np.float32).reshape(1, 4, 4))
    out = multi_head_attention(q, k, v, num_heads=1)
    expect = np.tile(v.data.mean(axis=1, keepdims=True), (1, 4, 1))
    assert np.allclose(out.data, expect, atol=1e-5)
