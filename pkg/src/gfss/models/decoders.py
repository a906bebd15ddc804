"""Decoders: features in, per-pixel class logits out.

Three families with very different adaptation surfaces:

* ``LinearDecoder`` is a single class-prototype head; at adaptation the
  whole (augmented) head trains.
* ``UperNetLite`` fuses the CNN pyramid into one map; its body stays
  frozen at adaptation and only the classifier head trains.
* ``MaskTransformerLite`` attends over [patch tokens; class embeddings];
  at adaptation the class embeddings and its layer-norm parameters train.

Every decoder exposes ``adapt_trainable()`` returning the parameter
names (relative to the decoder) that may move during support-set
adaptation, and ``head_param_names()`` naming the class-indexed tensors
that grow when novel classes are appended.
"""

from __future__ import annotations

import math

import numpy as np

from ..numcore import Rng
from ..numcore.tensor import Tensor, concat, relu, slice_axis
from ..numcore import functional as F
from .encoders import FeatureSpec
from .layers import Conv, LayerNorm, Linear, Module, TransformerBlock


class ClassifierHead(Module):
    """Per-class prototype rows [K, D] plus biases [K]."""

    def __init__(self, rng: Rng, feat_dim: int, class_count: int):
        self.weight = Tensor(rng.truncated_normal((class_count, feat_dim), std=0.02))
        self.bias = Tensor(np.zeros(class_count, dtype=np.float32))

    @property
    def class_count(self) -> int:
        return self.weight.shape[0]

    def forward(self, feats: Tensor) -> Tensor:
        """[..., D] features -> [..., K] scores."""
        lead = feats.shape[:-1]
        flat = feats.reshape((int(np.prod(lead)), feats.shape[-1]))
        scores = flat @ self.weight.transpose((1, 0)) + self.bias
        return scores.reshape(lead + (self.class_count,))


def _scores_to_map(scores: Tensor, grid: tuple[int, int],
                   out_hw: tuple[int, int]) -> Tensor:
    """[N, T, K] per-position scores -> [N, K, H, W] upsampled logits."""
    n, t, k = scores.shape
    gh, gw = grid
    if t != gh * gw:
        raise ValueError(f"{t} positions do not tile a {gh}x{gw} grid")
    logits = scores.transpose((0, 2, 1)).reshape((n, k, gh, gw))
    if (gh, gw) == tuple(out_hw):
        return logits
    return F.bilinear_upsample(logits, out_hw[0], out_hw[1])


def _map_to_tokens(feat_map: Tensor) -> Tensor:
    """[N, C, h, w] -> [N, h*w, C]."""
    n, c, h, w = feat_map.shape
    return feat_map.reshape((n, c, h * w)).transpose((0, 2, 1))


class LinearDecoder(Module):
    """Classify each feature position, then upsample the score map."""

    KIND = "linear"

    def __init__(self, rng: Rng, spec: FeatureSpec, class_count: int):
        self.spec = spec
        feat_dim = spec.channels[-1]
        self.head = ClassifierHead(rng.spawn("head"), feat_dim, class_count)

    @property
    def class_count(self) -> int:
        return self.head.class_count

    def forward(self, features, out_hw: tuple[int, int]) -> Tensor:
        if self.spec.kind == "tokens":
            tokens = features
            grid = self.spec.grid
        else:
            final = features[-1]
            tokens = _map_to_tokens(final)
            grid = (final.shape[2], final.shape[3])
        return _scores_to_map(self.head(tokens), grid, out_hw)

    def adapt_trainable(self) -> list[str]:
        return ["head.weight", "head.bias"]

    def head_param_names(self) -> list[str]:
        return ["head.weight", "head.bias"]


class UperNetLite(Module):
    """Fuse a multi-scale pyramid into a single object head.

    Lateral 1x1 convolutions bring every stage to a common width, all
    maps are upsampled to the finest stage, concatenated, fused with a
    3x3 convolution, classified, and upsampled to image resolution.
    """

    KIND = "upernet_lite"
    FUSE_DIM = 64

    def __init__(self, rng: Rng, spec: FeatureSpec, class_count: int):
        if spec.kind != "pyramid" or len(spec.channels) < 2:
            raise ValueError("upernet_lite requires multi-scale features")
        self.spec = spec
        self.laterals = [
            Conv(rng.spawn("lateral", i), ch, self.FUSE_DIM, 1)
            for i, ch in enumerate(spec.channels)
        ]
        self.fuse = Conv(rng.spawn("fuse"), self.FUSE_DIM * len(spec.channels),
                         self.FUSE_DIM, 3, padding=1)
        self.head = ClassifierHead(rng.spawn("head"), self.FUSE_DIM, class_count)

    @property
    def class_count(self) -> int:
        return self.head.class_count

    def fused_map(self, features: list[Tensor]) -> Tensor:
        """Everything before the classifier; frozen during adaptation."""
        if not isinstance(features, (list, tuple)) or len(features) < 2:
            raise ValueError("upernet_lite requires multi-scale features")
        if len(features) != len(self.laterals):
            raise ValueError(
                f"expected {len(self.laterals)} pyramid levels, got {len(features)}")
        target_h, target_w = features[0].shape[2], features[0].shape[3]
        resized = []
        for conv, level in zip(self.laterals, features):
            x = relu(conv(level))
            if x.shape[2] != target_h or x.shape[3] != target_w:
                x = F.bilinear_upsample(x, target_h, target_w)
            resized.append(x)
        return relu(self.fuse(concat(resized, axis=1)))

    def forward(self, features: list[Tensor], out_hw: tuple[int, int]) -> Tensor:
        fused = self.fused_map(features)
        return self.classify(fused, out_hw)

    def classify(self, fused: Tensor, out_hw: tuple[int, int]) -> Tensor:
        grid = (fused.shape[2], fused.shape[3])
        return _scores_to_map(self.head(_map_to_tokens(fused)), grid, out_hw)

    def adapt_trainable(self) -> list[str]:
        return ["head.weight", "head.bias"]

    def head_param_names(self) -> list[str]:
        return ["head.weight", "head.bias"]


class MaskTransformerLite(Module):
    """Joint attention over patch tokens and one embedding per class.

    Logits are the scaled dot product between each (upsampled) patch
    token and each class embedding after the shared blocks.
    """

    KIND = "mask_transformer_lite"
    DEPTH = 2

    def __init__(self, rng: Rng, spec: FeatureSpec, class_count: int):
        if spec.kind != "tokens":
            raise ValueError("mask_transformer_lite requires token features")
        self.spec = spec
        dim = spec.channels[-1]
        self.dim = dim
        self.proj = Linear(rng.spawn("proj"), dim, dim)
        self.class_embeddings = Tensor(
            rng.spawn("cls").truncated_normal((class_count, dim), std=0.02))
        self.blocks = [TransformerBlock(rng.spawn("block", i), dim, heads=4)
                       for i in range(self.DEPTH)]
        self.final_norm = LayerNorm(dim)

    @property
    def class_count(self) -> int:
        return self.class_embeddings.shape[0]

    def forward(self, tokens: Tensor, out_hw: tuple[int, int]) -> Tensor:
        if not isinstance(tokens, Tensor):
            raise ValueError("mask_transformer_lite requires token features")
        n, t, d = tokens.shape
        if d != self.dim:
            raise ValueError(f"token dim {d} does not match decoder dim {self.dim}")
        k = self.class_count
        x = self.proj(tokens)
        cls_rows = self.class_embeddings.reshape((1, k, d))
        seq = concat([x, concat([cls_rows] * n, axis=0)], axis=1)
        for block in self.blocks:
            seq = block(seq)
        seq = self.final_norm(seq)
        patch_part = slice_axis(seq, 1, 0, t)
        class_part = slice_axis(seq, 1, t, t + k)
        scores = (patch_part @ class_part.transpose((0, 2, 1))) * (1.0 / math.sqrt(d))
        return _scores_to_map(scores, self.spec.grid, out_hw)

    def adapt_trainable(self) -> list[str]:
        names = ["class_embeddings"]
        names += [name for name, _ in self.named_parameters()
                  if name.endswith((".scale", ".shift"))]
        return names

    def head_param_names(self) -> list[str]:
        return ["class_embeddings"]


def build_decoder(kind: str, rng: Rng, spec: FeatureSpec, class_count: int) -> Module:
    if class_count < 2:
        raise ValueError(f"class_count must be at least 2, got {class_count}")
    if kind == "linear":
        return LinearDecoder(rng, spec, class_count)
    if kind == "upernet_lite":
        return UperNetLite(rng, spec, class_count)
    if kind == "mask_transformer_lite":
        return MaskTransformerLite(rng, spec, class_count)
    raise ValueError(f"unknown decoder kind: {kind!r}")
