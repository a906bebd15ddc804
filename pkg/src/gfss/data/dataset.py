"""Samples, the dataset file format, and the base/novel partitioning.

File layout (all integers little-endian): magic ``GFSSDATA``, version
u32, sample count u32, then per sample H u32, W u32, the image as raw
float32 [3,H,W], and the mask as raw u8 [H,W]. Round-trips are bitwise
exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numcore import Rng
from ..splits import ClassSplit

MAGIC = b"GFSSDATA"
VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    """One image [3,H,W] float32 in [0,1] with its [H,W] class-id mask."""

    image: np.ndarray
    mask: np.ndarray


def save_dataset(path, samples) -> None:
    samples = list(samples)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(samples)))
        for i, s in enumerate(samples):
            image = np.ascontiguousarray(s.image, dtype=np.float32)
            mask = np.ascontiguousarray(s.mask, dtype=np.uint8)
            if image.ndim != 3 or image.shape[0] != 3:
                raise DatasetError(f"sample {i}: image must be [3,H,W]")
            if mask.shape != image.shape[1:]:
                raise DatasetError(f"sample {i}: mask does not match image")
            fh.write(struct.pack("<II", image.shape[1], image.shape[2]))
            fh.write(image.astype("<f4", copy=False).tobytes())
            fh.write(mask.tobytes())


def load_dataset(path) -> list[Sample]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DatasetError(f"{path}: not a dataset file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    offset = 16
    samples = []
    for i in range(count):
        if offset + 8 > len(blob):
            raise DatasetError(f"{path}: truncated at sample {i}")
        h, w = struct.unpack_from("<II", blob, offset)
        offset += 8
        img_bytes = 3 * h * w * 4
        if offset + img_bytes + h * w > len(blob):
            raise DatasetError(f"{path}: truncated at sample {i}")
        image = np.frombuffer(blob, dtype="<f4", count=3 * h * w,
                              offset=offset).reshape(3, h, w).copy()
        offset += img_bytes
        mask = np.frombuffer(blob, dtype=np.uint8, count=h * w,
                             offset=offset).reshape(h, w).copy()
        offset += h * w
        samples.append(Sample(image=image, mask=mask))
    if offset != len(blob):
        raise DatasetError(f"{path}: {len(blob) - offset} trailing bytes")
    return samples


def relabel_novel_to_background(mask: np.ndarray, split: ClassSplit) -> np.ndarray:
    """Novel ids become background; every other pixel is untouched."""
    out = mask.copy()
    for cid in split.novel_ids:
        out[mask == cid] = 0
    return out


def _partition(count: int, seed: int):
    """Seeded 80/20 cut: (train indices in shuffled order, sorted val indices)."""
    if count < 2:
        raise DatasetError("dataset too small to split")
    order = list(range(count))
    Rng(seed).spawn("base-split").shuffle(order)
    val_count = max(1, round(count / 5))
    val_idx = set(order[:val_count])
    train = [i for i in order if i not in val_idx]
    return train, sorted(val_idx)


def split_dataset(samples, split: ClassSplit, seed: int = 0):
    """(base_train, base_val, inference_pool).

    The base sets see novel pixels relabeled to background and are cut
    80/20 by a seeded shuffle; the pool keeps every image with its full
    mask."""
    samples = list(samples)
    train_idx, val_idx = _partition(len(samples), seed)
    base = [Sample(image=s.image, mask=relabel_novel_to_background(s.mask, split))
            for s in samples]
    train = [base[i] for i in train_idx]
    val = [base[i] for i in val_idx]
    if not train or not val:
        raise DatasetError("empty partition after split")
    return train, val, samples


def pretrain_split(samples, seed: int = 0):
    """The same seeded 80/20 cut as ``split_dataset`` with full masks kept.

    Backbone pretraining sees every class, so its samples keep their
    original labels; using the identical partition keeps the base-stage
    validation images out of the pretraining train set."""
    samples = list(samples)
    train_idx, val_idx = _partition(len(samples), seed)
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]
