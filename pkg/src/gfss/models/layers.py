"""Small building blocks shared by the encoders and decoders.

``Module`` is a deliberately tiny parameter container: submodules and
tensors registered as attributes are discovered by walking ``__dict__``
in insertion order, which keeps parameter naming stable across runs
(the checkpoint format depends on that).
"""

from __future__ import annotations

import math

import numpy as np

from ..numcore import Rng, Tensor, gelu, layer_norm, multi_head_attention
from ..numcore import functional as F


class Module:
    """Base class providing recursive named-parameter discovery."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []

        def walk(prefix: str, value) -> None:
            if isinstance(value, Tensor):
                out.append((prefix, value))
            elif isinstance(value, Module):
                for sub, p in value.named_parameters():
                    out.append((f"{prefix}.{sub}", p))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    walk(f"{prefix}.{i}", item)

        for attr, value in vars(self).items():
            walk(attr, value)
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """Affine map along the last axis; leading axes are flattened through."""

    def __init__(self, rng: Rng, in_dim: int, out_dim: int):
        self.weight = Tensor(rng.truncated_normal((in_dim, out_dim), std=0.02))
        self.bias = Tensor(np.zeros(out_dim, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = x.reshape((int(np.prod(lead)), x.shape[-1])) if len(lead) != 1 else x
        out = flat @ self.weight + self.bias
        if len(lead) != 1:
            out = out.reshape(lead + (self.weight.shape[1],))
        return out


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.scale = Tensor(np.ones(dim, dtype=np.float32))
        self.shift = Tensor(np.zeros(dim, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.scale, self.shift)


class Conv(Module):
    """3x3/1x1 convolution with He fan-in initialization."""

    def __init__(self, rng: Rng, in_ch: int, out_ch: int, kernel: int,
                 stride: int = 1, padding: int = 0):
        fan_in = in_ch * kernel * kernel
        self.weight = Tensor(rng.normal((out_ch, in_ch, kernel, kernel),
                                        std=math.sqrt(2.0 / fan_in)))
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32))
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias,
                        stride=self.stride, padding=self.padding)


class TransformerBlock(Module):
    """Pre-norm attention + MLP block with residual connections."""

    def __init__(self, rng: Rng, dim: int, heads: int, mlp_ratio: int = 2):
        if dim % heads:
            raise ValueError(f"dim {dim} must be divisible by heads {heads}")
        self.norm1 = LayerNorm(dim)
        self.to_q = Linear(rng.spawn("q"), dim, dim)
        self.to_k = Linear(rng.spawn("k"), dim, dim)
        self.to_v = Linear(rng.spawn("v"), dim, dim)
        self.proj = Linear(rng.spawn("proj"), dim, dim)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(rng.spawn("fc1"), dim, dim * mlp_ratio)
        self.fc2 = Linear(rng.spawn("fc2"), dim * mlp_ratio, dim)
        self.heads = heads

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        attended = multi_head_attention(self.to_q(h), self.to_k(h), self.to_v(h),
                                        self.heads)
        x = x + self.proj(attended)
        h = self.norm2(x)
        return x + self.fc2(gelu(self.fc1(h)))
