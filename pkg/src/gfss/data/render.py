"""PNG previews: images, palette-colored masks, prediction overlays."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

from ..splits import IGNORE_ID


def _build_palette(entries: int = 21) -> np.ndarray:
    """Fixed palette: background black, classes on an evenly spaced hue
    wheel. Index 255 renders white."""
    table = np.zeros((256, 3), dtype=np.uint8)
    for cid in range(1, entries):
        r, g, b = colorsys.hsv_to_rgb((cid - 1) / (entries - 1), 0.85, 0.95)
        table[cid] = (round(r * 255), round(g * 255), round(b * 255))
    table[IGNORE_ID] = (255, 255, 255)
    return table


PALETTE = _build_palette()


def _to_uint8_image(image: np.ndarray) -> np.ndarray:
    arr = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    return (arr.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)


def save_image_png(path, image: np.ndarray) -> None:
    Image.fromarray(_to_uint8_image(image)).save(Path(path), format="PNG")


def save_mask_png(path, mask: np.ndarray) -> None:
    colored = PALETTE[np.asarray(mask, dtype=np.uint8)]
    Image.fromarray(colored).save(Path(path), format="PNG")


def save_overlay_png(path, image: np.ndarray, labels: np.ndarray,
                     alpha: float = 0.55) -> None:
    """Blend class colors over the image; background keeps the photo."""
    base = _to_uint8_image(image).astype(np.float32)
    labels = np.asarray(labels, dtype=np.uint8)
    colors = PALETTE[labels].astype(np.float32)
    blend = base.copy()
    fg = labels != 0
    blend[fg] = (1.0 - alpha) * base[fg] + alpha * colors[fg]
    Image.fromarray(blend.round().astype(np.uint8)).save(Path(path), format="PNG")
