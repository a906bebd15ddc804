"""Encoders: a small ViT producing patch tokens and a small residual CNN
producing a four-level feature pyramid.

Both are sized for 64x64 inputs. The ViT variants differ only in width
(64 vs 128) and the CNN variants only in depth (2 vs 3 blocks per
stage), so the parameter-count ordering between the small and large
variant of each family holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..numcore import Rng
from ..numcore.tensor import Tensor, relu
from ..numcore import functional as F
from .layers import Conv, LayerNorm, Linear, Module, TransformerBlock


@dataclass(frozen=True)
class FeatureSpec:
    """What an encoder hands to a decoder.

    kind "tokens": one [N, T, dim] tensor on a grid_h x grid_w patch grid.
    kind "pyramid": a list of [N, C_i, H_i, W_i] maps, coarsest last;
    channels holds the C_i in that order.
    """

    kind: str
    channels: tuple[int, ...]
    grid: tuple[int, int]
    image_size: int


class TinyVit(Module):
    """Patch-embedding transformer; returns per-patch tokens [N, T, dim]."""

    PATCH = 8

    def __init__(self, rng: Rng, dim: int, image_size: int = 64,
                 depth: int = 4, heads: int = 4):
        if image_size % self.PATCH:
            raise ValueError(
                f"image size {image_size} not divisible by patch size {self.PATCH}")
        self.dim = dim
        self.image_size = image_size
        side = image_size // self.PATCH
        self.grid = (side, side)
        tokens = side * side
        self.embed = Linear(rng.spawn("embed"), 3 * self.PATCH * self.PATCH, dim)
        self.pos = Tensor(rng.spawn("pos").truncated_normal((tokens, dim), std=0.02))
        self.blocks = [TransformerBlock(rng.spawn("block", i), dim, heads)
                       for i in range(depth)]
        self.final_norm = LayerNorm(dim)

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec("tokens", (self.dim,), self.grid, self.image_size)

    def forward(self, images: Tensor) -> Tensor:
        n, c, height, width = images.shape
        if c != 3:
            raise ValueError(f"expected 3 input channels, got {c}")
        if height % self.PATCH or width % self.PATCH:
            raise ValueError(f"input {height}x{width} not divisible by patch {self.PATCH}")
        gh, gw = height // self.PATCH, width // self.PATCH
        if (gh, gw) != self.grid:
            raise ValueError(
                f"input {height}x{width} gives a {gh}x{gw} grid; "
                f"positional table was built for {self.grid[0]}x{self.grid[1]}")
        p = self.PATCH
        patches = images.reshape((n, 3, gh, p, gw, p))
        patches = patches.transpose((0, 2, 4, 1, 3, 5))
        patches = patches.reshape((n, gh * gw, 3 * p * p))
        x = self.embed(patches)
        # The graph ops only broadcast 1-D biases, so fold the [T, dim]
        # positional table into a flat bias over flattened tokens.
        t, d = self.pos.shape
        x = (x.reshape((n, t * d)) + self.pos.reshape((t * d,))).reshape((n, t, d))
        for block in self.blocks:
            x = block(x)
        return self.final_norm(x)


class ResidualBlock(Module):
    def __init__(self, rng: Rng, in_ch: int, out_ch: int, stride: int = 1):
        self.conv1 = Conv(rng.spawn("c1"), in_ch, out_ch, 3, stride=stride, padding=1)
        self.conv2 = Conv(rng.spawn("c2"), out_ch, out_ch, 3, stride=1, padding=1)
        self.skip = None
        if stride != 1 or in_ch != out_ch:
            self.skip = Conv(rng.spawn("skip"), in_ch, out_ch, 1, stride=stride)

    def forward(self, x: Tensor) -> Tensor:
        h = relu(self.conv1(x))
        h = self.conv2(h)
        shortcut = self.skip(x) if self.skip is not None else x
        return relu(h + shortcut)


class TinyCnn(Module):
    """Four residual stages after a stride-2 stem; returns the pyramid
    [stage1..stage4] at strides 2, 4, 8, 16."""

    CHANNELS = (16, 32, 64, 128)
    TOTAL_STRIDE = 16

    def __init__(self, rng: Rng, blocks_per_stage: int, image_size: int = 64):
        if image_size % self.TOTAL_STRIDE:
            raise ValueError(
                f"image size {image_size} not divisible by total stride {self.TOTAL_STRIDE}")
        self.image_size = image_size
        self.stem = Conv(rng.spawn("stem"), 3, self.CHANNELS[0], 3, stride=1, padding=1)
        self.stages = []
        in_ch = self.CHANNELS[0]
        for s, out_ch in enumerate(self.CHANNELS):
            blocks = []
            for b in range(blocks_per_stage):
                stride = 2 if (b == 0 and s > 0) else 1
                blocks.append(ResidualBlock(rng.spawn("stage", s, b), in_ch, out_ch, stride))
                in_ch = out_ch
            self.stages.append(blocks)

    def feature_spec(self) -> FeatureSpec:
        side = self.image_size // self.TOTAL_STRIDE
        return FeatureSpec("pyramid", self.CHANNELS, (side, side), self.image_size)

    def forward(self, images: Tensor) -> list[Tensor]:
        n, c, height, width = images.shape
        if c != 3:
            raise ValueError(f"expected 3 input channels, got {c}")
        if height % self.TOTAL_STRIDE or width % self.TOTAL_STRIDE:
            raise ValueError(
                f"input {height}x{width} not divisible by total stride {self.TOTAL_STRIDE}")
        x = relu(self.stem(images))
        x = F.max_pool2d(x, 2)
        pyramid = []
        for blocks in self.stages:
            for block in blocks:
                x = block(x)
            pyramid.append(x)
        return pyramid


def build_encoder(kind: str, rng: Rng, image_size: int = 64) -> Module:
    if kind == "tiny_vit_a":
        return TinyVit(rng, dim=64, image_size=image_size)
    if kind == "tiny_vit_b":
        return TinyVit(rng, dim=128, image_size=image_size)
    if kind == "tiny_cnn_small":
        return TinyCnn(rng, blocks_per_stage=2, image_size=image_size)
    if kind == "tiny_cnn_large":
        return TinyCnn(rng, blocks_per_stage=3, image_size=image_size)
    raise ValueError(f"unknown encoder kind: {kind!r}")
