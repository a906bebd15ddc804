from .dataset import (
    DatasetError,
    Sample,
    load_dataset,
    pretrain_split,
    relabel_novel_to_background,
    save_dataset,
    split_dataset,
)
from .render import PALETTE, save_image_png, save_mask_png, save_overlay_png
from .synth import SynthConfig, generate

__all__ = [
    "DatasetError",
    "Sample",
    "load_dataset",
    "pretrain_split",
    "relabel_novel_to_background",
    "save_dataset",
    "split_dataset",
    "PALETTE",
    "save_image_png",
    "save_mask_png",
    "save_overlay_png",
    "SynthConfig",
    "generate",
]
