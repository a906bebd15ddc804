"""Encoder + decoder pairing with named parameters and trainability.

Parameter names are ``encoder.<path>`` / ``decoder.<path>`` where the
path comes from attribute discovery; the same names key checkpoints, so
renaming an attribute is a format break.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Rng, Tensor
from .decoders import build_decoder
from .encoders import FeatureSpec, build_encoder

ENCODER_KINDS = ("tiny_cnn_small", "tiny_cnn_large", "tiny_vit_a", "tiny_vit_b")
DECODER_KINDS = ("linear", "upernet_lite", "mask_transformer_lite")


@dataclass(frozen=True)
class ModelConfig:
    encoder: str
    decoder: str
    image_size: int = 64

    def __post_init__(self):
        if self.encoder not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind: {self.encoder!r}")
        if self.decoder not in DECODER_KINDS:
            raise ValueError(f"unknown decoder kind: {self.decoder!r}")
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")

    @property
    def encoder_is_vit(self) -> bool:
        return self.encoder.startswith("tiny_vit")


class SegModel:
    """A segmentation model: images [N,3,H,W] -> logits [N,K,H,W]."""

    def __init__(self, config: ModelConfig, encoder, decoder):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder
        self.trainable: frozenset[str] = frozenset(n for n, _ in self.named_parameters())
        self._apply_trainability()

    # -- parameters -----------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [(f"encoder.{n}", p) for n, p in self.encoder.named_parameters()]
        out += [(f"decoder.{n}", p) for n, p in self.decoder.named_parameters()]
        return out

    def parameter(self, name: str) -> Tensor:
        for n, p in self.named_parameters():
            if n == name:
                return p
        raise KeyError(f"no parameter named {name!r}")

    def set_trainable(self, names) -> None:
        names = frozenset(names)
        known = {n for n, _ in self.named_parameters()}
        stray = names - known
        if stray:
            raise KeyError(f"unknown parameter names: {sorted(stray)}")
        self.trainable = names
        self._apply_trainability()

    def _apply_trainability(self) -> None:
        for n, p in self.named_parameters():
            p.requires_grad = n in self.trainable

    def trainable_parameters(self) -> list[Tensor]:
        return [p for n, p in self.named_parameters() if n in self.trainable]

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    # -- forward --------------------------------------------------------

    @property
    def class_count(self) -> int:
        return self.decoder.class_count

    @property
    def feature_spec(self) -> FeatureSpec:
        return self.encoder.feature_spec()

    def encode(self, images):
        if not isinstance(images, Tensor):
            images = Tensor(np.ascontiguousarray(images, dtype=np.float32))
        return self.encoder(images)

    def decode(self, features, out_hw: tuple[int, int]) -> Tensor:
        return self.decoder(features, out_hw)

    def forward(self, images) -> Tensor:
        if not isinstance(images, Tensor):
            images = Tensor(np.ascontiguousarray(images, dtype=np.float32))
        h, w = images.shape[2], images.shape[3]
        return self.decode(self.encode(images), (h, w))

    __call__ = forward

    # -- checkpoint state -----------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in state.items():
            p = params[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {arr.shape}, model {p.shape}")
            p.data = np.ascontiguousarray(arr, dtype=np.float32).copy()
            p.grad = None

    def load_encoder_state(self, state: dict[str, np.ndarray]) -> None:
        """Load only the ``encoder.*`` parameters (a pretrained backbone).

        ``state`` must cover the encoder's parameter set exactly; decoder
        parameters are left untouched.
        """
        enc = {n: p for n, p in self.named_parameters() if n.startswith("encoder.")}
        if set(state) != set(enc):
            missing = sorted(set(enc) - set(state))
            extra = sorted(set(state) - set(enc))
            raise ValueError(
                f"encoder state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in state.items():
            p = enc[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {arr.shape}, model {p.shape}")
            p.data = np.ascontiguousarray(arr, dtype=np.float32).copy()
            p.grad = None


def build_model(config: ModelConfig, class_count: int, seed: int) -> SegModel:
    """Freshly initialized model; all parameters marked trainable."""
    rng = Rng(seed)
    encoder = build_encoder(config.encoder, rng.spawn("encoder"), config.image_size)
    decoder = build_decoder(config.decoder, rng.spawn("decoder"),
                            encoder.feature_spec(), class_count)
    return SegModel(config, encoder, decoder)
