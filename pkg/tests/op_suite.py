"""Randomized input builders for every differentiable op.

Each entry maps an op name to a builder: builder(rng) -> (fn, arrays).
``fn`` consumes Tensors positionally and the arrays are the float
inputs whose gradients get checked. Inputs near kinks (relu, clamp,
pooling ties) are nudged away so the finite-difference oracle stays
well defined.
"""

from __future__ import annotations

import numpy as np

from gfss.numcore import (
    add,
    bilinear_upsample,
    clamp_min,
    concat,
    conv2d,
    cross_entropy,
    embedding,
    gelu,
    layer_norm,
    log,
    matmul,
    max_pool2d,
    mul,
    multi_head_attention,
    neg,
    relu,
    reshape,
    slice_axis,
    softmax,
    tensor_mean,
    tensor_sum,
    transpose,
)
from gradcheck import away_from


def _std(rng, *shape):
    return rng.standard_normal(shape).astype(np.float32)


def _pool_input(rng):
    # unique values per pooling window so argmax has no ties
    x = rng.permutation(np.arange(2 * 36, dtype=np.float32)).reshape(1, 2, 6, 6)
    return x / 36.0


def _ce_case(rng):
    p = np.abs(_std(rng, 1, 3, 4, 4)) + 0.1
    labels = rng.integers(0, 3, size=(1, 4, 4)).astype(np.int64)
    labels[0, 0, 0] = 255  # one ignored pixel exercises masking
    return (lambda t: cross_entropy(t, labels)), [p]


def _embedding_case(rng):
    table = _std(rng, 7, 4)
    idx = np.array([2, 0, 5, 2])  # repeated row checks accumulation
    return (lambda t: embedding(t, idx)), [table]


OP_CASES = {
    "add": lambda rng: (add, [_std(rng, 3, 4), _std(rng, 3, 4)]),
    "add_broadcast": lambda rng: (add, [_std(rng, 3, 4), _std(rng, 4)]),
    "neg": lambda rng: (neg, [_std(rng, 5)]),
    "mul": lambda rng: (mul, [_std(rng, 3, 4), _std(rng, 3, 4)]),
    "matmul": lambda rng: (matmul, [_std(rng, 3, 4), _std(rng, 4, 2)]),
    "matmul_batched": lambda rng: (matmul, [_std(rng, 2, 3, 4), _std(rng, 2, 4, 2)]),
    "relu": lambda rng: (relu, [away_from(rng, (3, 4))]),
    "clamp_min": lambda rng: (
        lambda t: clamp_min(t, 0.2), [away_from(rng, (3, 4), kink=0.2)]),
    "log": lambda rng: (log, [np.abs(_std(rng, 3, 4)) + 0.5]),
    "reshape": lambda rng: (lambda t: reshape(t, (3, 4)), [_std(rng, 2, 6)]),
    "transpose": lambda rng: (
        lambda t: transpose(t, (2, 0, 1)), [_std(rng, 2, 3, 4)]),
    "concat": lambda rng: (
        lambda a, b: concat([a, b], axis=1), [_std(rng, 2, 3), _std(rng, 2, 2)]),
    "slice_axis": lambda rng: (
        lambda t: slice_axis(t, axis=1, start=1, stop=4), [_std(rng, 3, 5)]),
    "tensor_sum": lambda rng: (
        lambda t: tensor_sum(t, axis=0), [_std(rng, 3, 4)]),
    "tensor_mean": lambda rng: (
        lambda t: tensor_mean(t, axis=(0, 1)), [_std(rng, 3, 4)]),
    "gelu": lambda rng: (gelu, [_std(rng, 3, 4)]),
    "softmax": lambda rng: (lambda t: softmax(t, axis=1), [_std(rng, 2, 5)]),
    "layer_norm": lambda rng: (
        layer_norm,
        [_std(rng, 2, 3, 6), np.abs(_std(rng, 6)) + 0.5, _std(rng, 6)]),
    "conv2d": lambda rng: (
        lambda x, w, b: conv2d(x, w, b, stride=1, padding=1),
        [_std(rng, 1, 2, 6, 6), _std(rng, 3, 2, 3, 3) * 0.5, _std(rng, 3)]),
    "conv2d_strided": lambda rng: (
        lambda x, w: conv2d(x, w, stride=2, padding=0),
        [_std(rng, 1, 2, 6, 6), _std(rng, 2, 2, 2, 2) * 0.5]),
    "max_pool2d": lambda rng: (lambda t: max_pool2d(t, 2), [_pool_input(rng)]),
    "bilinear_upsample": lambda rng: (
        lambda t: bilinear_upsample(t, 7, 9), [_std(rng, 1, 2, 4, 4)]),
    "embedding": _embedding_case,
    "cross_entropy": _ce_case,
    "multi_head_attention": lambda rng: (
        lambda q, k, v: multi_head_attention(q, k, v, num_heads=2),
        [_std(rng, 1, 5, 8), _std(rng, 1, 5, 8), _std(rng, 1, 5, 8)]),
}
