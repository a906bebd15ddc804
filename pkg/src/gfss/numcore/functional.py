"""Neural-network operations over :class:`~gfss.numcore.tensor.Tensor`.

Each op carries its own backward rule; multi_head_attention is composed
purely from the primitives so its gradient falls out of the graph.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .tensor import (
    Tensor,
    _from_op,
    _wrap,
    concat,
    matmul,
    mul,
    reshape,
    slice_axis,
    tensor_sum,
    transpose,
)

_INV_SQRT2 = np.float32(1.0 / math.sqrt(2.0))
_INV_SQRT2PI = np.float32(1.0 / math.sqrt(2.0 * math.pi))


def gelu(a: Tensor) -> Tensor:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    a = _wrap(a)
    e = erf(a.data * _INV_SQRT2).astype(np.float32)
    out_data = 0.5 * a.data * (1.0 + e)

    def backward(g, a=a, e=e):
        if a.requires_grad:
            x = a.data
            local = 0.5 * (1.0 + e) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI
            a._accumulate(g * local)

    return _from_op(out_data, (a,), backward, "gelu")


def softmax(a: Tensor, axis: int) -> Tensor:
    """Stable softmax along one axis (max-subtracted)."""
    a = _wrap(a)
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g, a=a, y=out_data, axis=axis):
        if a.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate((g - inner) * y)

    return _from_op(out_data, (a,), backward, "softmax")


def layer_norm(a: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then apply learnable scale and shift."""
    a, scale, shift = _wrap(a), _wrap(scale), _wrap(shift)
    if scale.shape != a.shape[-1:] or shift.shape != a.shape[-1:]:
        raise ValueError("layer_norm: scale/shift must match the last axis")
    mean = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (a.data - mean) * inv_std
    out_data = xhat * scale.data + shift.data

    def backward(g, a=a, scale=scale, shift=shift, xhat=xhat, inv_std=inv_std):
        if scale.requires_grad:
            scale._accumulate((g * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0))
        if shift.requires_grad:
            shift._accumulate(g.reshape(-1, xhat.shape[-1]).sum(axis=0))
        if a.requires_grad:
            d = g * scale.data
            m1 = d.mean(axis=-1, keepdims=True)
            m2 = (d * xhat).mean(axis=-1, keepdims=True)
            a._accumulate((d - m1 - xhat * m2) * inv_std)

    return _from_op(out_data, (a, scale, shift), backward, "layer_norm")


# convolution ----------------------------------------------------------------

_col_index_cache: dict = {}


def _col_indices(channels, height, width, k, stride, padding):
    key = (channels, height, width, k, stride, padding)
    hit = _col_index_cache.get(key)
    if hit is not None:
        return hit
    out_h = (height + 2 * padding - k) // stride + 1
    out_w = (width + 2 * padding - k) // stride + 1
    i0 = np.tile(np.repeat(np.arange(k), k), channels)
    j0 = np.tile(np.arange(k), k * channels)
    i1 = stride * np.repeat(np.arange(out_h), out_w)
    j1 = stride * np.tile(np.arange(out_w), out_h)
    rows = i0[:, None] + i1[None, :]
    cols = j0[:, None] + j1[None, :]
    chan = np.repeat(np.arange(channels), k * k)[:, None]
    hit = (chan, rows, cols, out_h, out_w)
    _col_index_cache[key] = hit
    return hit


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, NCHW layout, square kernel.

    Output spatial size is floor((H + 2p - k) / stride) + 1.  Implemented
    as im2col followed by one batched matmul.
    """
    x, w = _wrap(x), _wrap(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects x[N,C,H,W] and w[O,C,k,k]")
    n, c, h, width = x.shape
    o, wc, k, k2 = w.shape
    if wc != c or k != k2:
        raise ValueError(f"conv2d: kernel {w.shape} does not match input channels {c}")
    if k > h + 2 * padding or k > width + 2 * padding:
        raise ValueError("conv2d: kernel larger than padded input")
    if stride < 1:
        raise ValueError("conv2d: stride must be >= 1")
    chan, rows, cols, out_h, out_w = _col_indices(c, h, width, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    # Advanced indexing leaves the batch axis with awkward strides, which
    # knocks the matmul below off the BLAS fast path; compact it first.
    patches = np.ascontiguousarray(xp[:, chan, rows, cols])  # [N, C*k*k, L]
    w_mat = w.data.reshape(o, c * k * k)
    out = w_mat @ patches  # [N, O, L]
    if b is not None:
        b = _wrap(b)
        if b.shape != (o,):
            raise ValueError("conv2d: bias must have one entry per output channel")
        out = out + b.data[None, :, None]
    out_data = out.reshape(n, o, out_h, out_w)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g, x=x, w=w, b=b, patches=patches, w_mat=w_mat,
                 geom=(n, c, h, width, k, stride, padding, out_h, out_w),
                 idx=(chan, rows, cols)):
        n, c, h, width, k, stride, padding, out_h, out_w = geom
        chan, rows, cols = idx
        g_mat = g.reshape(n, g.shape[1], out_h * out_w)
        if b is not None and b.requires_grad:
            b._accumulate(g_mat.sum(axis=(0, 2)))
        if w.requires_grad:
            gw = np.einsum("nol,npl->op", g_mat, patches, optimize=True)
            w._accumulate(gw.reshape(w.data.shape))
        if x.requires_grad:
            g_patches = w_mat.T @ g_mat  # [N, C*k*k, L]
            gxp = np.zeros((n, c, h + 2 * padding, width + 2 * padding), dtype=np.float32)
            np.add.at(gxp, (np.arange(n)[:, None, None], chan[None], rows[None], cols[None]), g_patches)
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            x._accumulate(gxp)

    return _from_op(out_data, parents, backward, "conv2d")


def max_pool2d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    """Max pooling over k-by-k windows; trailing remainder is dropped."""
    x = _wrap(x)
    if x.ndim != 4:
        raise ValueError("max_pool2d expects x[N,C,H,W]")
    stride = k if stride is None else stride
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ValueError("max_pool2d: window larger than input")
    out_h = (h - k) // stride + 1
    out_w = (w - k) // stride + 1
    i0 = np.repeat(np.arange(k), k)
    j0 = np.tile(np.arange(k), k)
    i1 = stride * np.repeat(np.arange(out_h), out_w)
    j1 = stride * np.tile(np.arange(out_w), out_h)
    rows = i1[:, None] + i0[None, :]  # [L, k*k]
    cols = j1[:, None] + j0[None, :]
    windows = x.data[:, :, rows, cols]  # [N, C, L, k*k]
    arg = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0].reshape(n, c, out_h, out_w)

    def backward(g, x=x, arg=arg, rows=rows, cols=cols, shape=(n, c, h, w, out_h, out_w)):
        if not x.requires_grad:
            return
        n, c, h, w, out_h, out_w = shape
        gx = np.zeros((n, c, h, w), dtype=np.float32)
        li = np.arange(out_h * out_w)
        win_r = rows[li, arg]  # [N, C, L] via broadcast of arg
        win_c = cols[li, arg]
        ni = np.arange(n)[:, None, None]
        ci = np.arange(c)[None, :, None]
        np.add.at(gx, (ni, ci, win_r, win_c), g.reshape(n, c, -1))
        x._accumulate(gx)

    return _from_op(out_data, (x,), backward, "max_pool2d")


# bilinear interpolation -------------------------------------------------------

_interp_cache: dict = {}


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix mapping n_in samples to n_out (half-pixel centers)."""
    key = (n_in, n_out)
    hit = _interp_cache.get(key)
    if hit is not None:
        return hit
    m = np.zeros((n_out, n_in), dtype=np.float32)
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = (src - lo).astype(np.float32)
    lo_c = np.clip(lo, 0, n_in - 1)
    hi_c = np.clip(lo + 1, 0, n_in - 1)
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo_c), 1.0 - frac)
    np.add.at(m, (rows, hi_c), frac)
    _interp_cache[key] = m
    return m


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize [N,C,H,W] spatially with bilinear interpolation."""
    x = _wrap(x)
    if x.ndim != 4:
        raise ValueError("bilinear_upsample expects x[N,C,H,W]")
    n, c, h, w = x.shape
    mh = _interp_matrix(h, out_h)
    mw = _interp_matrix(w, out_w)
    out_data = mh @ x.data @ mw.T

    def backward(g, x=x, mh=mh, mw=mw):
        if x.requires_grad:
            x._accumulate(mh.T @ g @ mw)

    return _from_op(out_data, (x,), backward, "bilinear_upsample")


def embedding(table: Tensor, indices) -> Tensor:
    """Row lookup into a [V, D] table by an integer index array."""
    table = _wrap(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("embedding: indices must be integers")
    if table.ndim != 2:
        raise ValueError("embedding: table must be [V, D]")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError("embedding: index out of range")
    out_data = table.data[idx]

    def backward(g, table=table, idx=idx):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[1]))
            table._accumulate(gt)

    return _from_op(out_data, (table,), backward, "embedding")


def cross_entropy(probs: Tensor, labels: np.ndarray, ignore_id: int = 255) -> Tensor:
    """Mean of -log p[label] over non-ignored pixels.

    ``probs`` is [N,K,H,W] (already a distribution over K); labels is an
    integer map [N,H,W] with values in {0..K-1} or ignore_id.  The log is
    clamped at 1e-12 so a zero probability cannot produce -Inf.
    """
    probs = _wrap(probs)
    if probs.ndim != 4:
        raise ValueError("cross_entropy expects probs[N,K,H,W]")
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],) + probs.shape[2:]:
        raise ValueError(f"cross_entropy: labels {labels.shape} do not match probs {probs.shape}")
    keep = labels != ignore_id
    if not keep.any():
        raise ValueError("cross_entropy: empty loss support (all pixels ignored)")
    kept_labels = labels[keep]
    if kept_labels.min() < 0 or kept_labels.max() >= probs.shape[1]:
        raise ValueError("cross_entropy: label outside {0..K-1}")
    ni, hi, wi = np.nonzero(keep)
    picked = probs.data[ni, kept_labels, hi, wi]
    clamped = np.maximum(picked, np.float32(1e-12))
    count = kept_labels.size
    loss = np.float32(-np.log(clamped).sum() / count)

    def backward(g, probs=probs, coords=(ni, kept_labels, hi, wi), picked=picked,
                 clamped=clamped, count=count):
        if probs.requires_grad:
            ni, kk, hi, wi = coords
            gp = np.zeros_like(probs.data)
            live = picked > 1e-12  # clamp kills the gradient below the floor
            scale = np.float32(g) * (-1.0 / count)
            np.add.at(gp, (ni[live], kk[live], hi[live], wi[live]), scale / clamped[live])
            probs._accumulate(gp)

    return _from_op(np.asarray(loss), (probs,), backward, "cross_entropy")


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, num_heads: int) -> Tensor:
    """Scaled dot-product attention over [N, T, D], composed from primitives."""
    n, t, d = q.shape
    if d % num_heads:
        raise ValueError(f"attention: dim {d} not divisible by {num_heads} heads")
    hd = d // num_heads

    def split_heads(x):
        x = reshape(x, (n, t, num_heads, hd))
        x = transpose(x, (0, 2, 1, 3))
        return reshape(x, (n * num_heads, t, hd))

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    scores = mul(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(hd))
    attn = softmax(scores, axis=-1)
    out = matmul(attn, vh)
    out = reshape(out, (n, num_heads, t, hd))
    out = transpose(out, (0, 2, 1, 3))
    return reshape(out, (n, t, d))
