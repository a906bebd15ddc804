"""Central finite-difference gradient oracle.

The checked function maps Tensors to one Tensor. Its output is folded
to a scalar through a fixed random projection, the analytic gradients
come from backward(), and each input coordinate is perturbed by +/-eps
to get the numeric estimate. Errors are reported relative to the
gradient's own scale (floored at 1 so near-zero gradients are compared
absolutely).
"""

from __future__ import annotations

import numpy as np

from gfss.numcore import Tensor, mul, tensor_sum


def _loss(fn, arrays, weights) -> float:
    out = fn(*[Tensor(a.astype(np.float32)) for a in arrays])
    return float(np.sum(out.data.astype(np.float64) * weights))


def max_rel_err(fn, arrays, eps: float = 1e-3, proj_seed: int = 0) -> float:
    """Largest relative disagreement between backward() and central FD."""
    arrays = [np.asarray(a, dtype=np.float32) for a in arrays]
    probe = fn(*[Tensor(a) for a in arrays])
    weights = np.random.default_rng(proj_seed).standard_normal(probe.shape)

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*tensors)
    tensor_sum(mul(out, Tensor(weights.astype(np.float32)))).backward()

    worst = 0.0
    for i, base in enumerate(arrays):
        analytic = tensors[i].grad
        assert analytic is not None, f"input {i} received no gradient"
        numeric = np.zeros_like(base, dtype=np.float64)
        flat = base.copy()
        for idx in np.ndindex(base.shape):
            saved = flat[idx]
            flat[idx] = saved + eps
            hi = _loss(fn, arrays[:i] + [flat] + arrays[i + 1:], weights)
            flat[idx] = saved - eps
            lo = _loss(fn, arrays[:i] + [flat] + arrays[i + 1:], weights)
            flat[idx] = saved
            numeric[idx] = (hi - lo) / (2 * eps)
        scale = max(float(np.abs(numeric).max()), 1.0)
        err = float(np.abs(analytic.astype(np.float64) - numeric).max()) / scale
        worst = max(worst, err)
    return worst


def away_from(rng: np.random.Generator, shape, kink: float = 0.0,
              margin: float = 0.05, spread: float = 1.0) -> np.ndarray:
    """Random values kept at least ``margin`` away from a kink point."""
    x = rng.standard_normal(shape) * spread
    shift = np.where(x >= kink, margin, -margin)
    return (x + shift).astype(np.float32)
