from .encoders import FeatureSpec, TinyCnn, TinyVit, build_encoder
from .decoders import (
    ClassifierHead,
    LinearDecoder,
    MaskTransformerLite,
    UperNetLite,
    build_decoder,
)
from .layers import Conv, LayerNorm, Linear, Module, TransformerBlock
from .segmodel import DECODER_KINDS, ENCODER_KINDS, ModelConfig, SegModel, build_model

__all__ = [
    "FeatureSpec",
    "TinyCnn",
    "TinyVit",
    "build_encoder",
    "ClassifierHead",
    "LinearDecoder",
    "MaskTransformerLite",
    "UperNetLite",
    "build_decoder",
    "Conv",
    "LayerNorm",
    "Linear",
    "Module",
    "TransformerBlock",
    "DECODER_KINDS",
    "ENCODER_KINDS",
    "ModelConfig",
    "SegModel",
    "build_model",
]
