"""Class partitions and the channel layout shared by every stage.

A segmentation model built here emits one channel per class it knows
about, in a fixed order: channel 0 is background, the next ``len(base_ids)``
channels are the base classes, and any channels after that are novel
classes appended at adaptation time. ``ClassSplit`` owns that layout so
the mapping between raw dataset class ids and channel indices lives in
exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IGNORE_ID = 255


@dataclass(frozen=True)
class ClassSplit:
    """Partition of dataset class ids into base and novel groups.

    ``base_ids`` and ``novel_ids`` are ordered: their positions define
    the channel layout. Background always occupies channel 0 and id 0.
    """

    base_ids: tuple[int, ...]
    novel_ids: tuple[int, ...]
    background_id: int = field(default=0)

    def __post_init__(self):
        base = tuple(int(i) for i in self.base_ids)
        novel = tuple(int(i) for i in self.novel_ids)
        object.__setattr__(self, "base_ids", base)
        object.__setattr__(self, "novel_ids", novel)
        if self.background_id != 0:
            raise ValueError("background_id must be 0")
        if not base:
            raise ValueError("base_ids must not be empty")
        for cid in base + novel:
            if cid <= 0:
                raise ValueError(f"class id {cid} must be positive")
            if cid == IGNORE_ID:
                raise ValueError(f"class id {IGNORE_ID} is reserved for ignored pixels")
        if len(set(base)) != len(base) or len(set(novel)) != len(novel):
            raise ValueError("duplicate class id within a group")
        if set(base) & set(novel):
            raise ValueError("base_ids and novel_ids overlap")

    # -- channel layout -------------------------------------------------

    @property
    def base_count(self) -> int:
        return len(self.base_ids)

    @property
    def novel_count(self) -> int:
        return len(self.novel_ids)

    @property
    def base_channel_count(self) -> int:
        """Channels of a model that only knows background + base classes."""
        return 1 + len(self.base_ids)

    @property
    def channel_count(self) -> int:
        """Channels of a model augmented with the novel classes."""
        return 1 + len(self.base_ids) + len(self.novel_ids)

    def channel_order(self) -> tuple[int, ...]:
        """Class ids in channel order: background, base..., novel..."""
        return (0,) + self.base_ids + self.novel_ids

    def channel_for_id(self, class_id: int) -> int:
        if class_id == 0:
            return 0
        if class_id in self.base_ids:
            return 1 + self.base_ids.index(class_id)
        if class_id in self.novel_ids:
            return 1 + len(self.base_ids) + self.novel_ids.index(class_id)
        raise KeyError(f"class id {class_id} not part of this split")

    def id_for_channel(self, channel: int) -> int:
        order = self.channel_order()
        if not 0 <= channel < len(order):
            raise KeyError(f"channel {channel} out of range for {len(order)} channels")
        return order[channel]

    # -- mask remapping -------------------------------------------------

    def _lookup(self, include_novel: bool) -> np.ndarray:
        table = np.full(256, IGNORE_ID, dtype=np.int64)
        table[IGNORE_ID] = IGNORE_ID
        table[0] = 0
        for pos, cid in enumerate(self.base_ids):
            table[cid] = 1 + pos
        if include_novel:
            for pos, cid in enumerate(self.novel_ids):
                table[cid] = 1 + len(self.base_ids) + pos
        return table

    def mask_to_channels(self, mask: np.ndarray, include_novel: bool = True) -> np.ndarray:
        """Translate a mask of raw class ids into channel indices.

        Ignored pixels stay ``IGNORE_ID``. Ids outside the split (or
        novel ids when ``include_novel`` is false) raise, because a
        silently mistranslated label would corrupt training targets.
        """
        mask = np.asarray(mask)
        if mask.dtype.kind not in "iu":
            raise ValueError("mask must hold integer class ids")
        known = {0, IGNORE_ID, *self.base_ids}
        if include_novel:
            known |= set(self.novel_ids)
        present = set(np.unique(mask).tolist())
        stray = present - known
        if stray:
            raise ValueError(f"mask contains class ids outside the split: {sorted(stray)}")
        return self._lookup(include_novel)[mask.astype(np.int64)]

    def channels_to_ids(self, channels: np.ndarray) -> np.ndarray:
        """Translate channel-index predictions back to raw class ids."""
        channels = np.asarray(channels)
        order = np.array(self.channel_order(), dtype=np.int64)
        if channels.size and (channels.min() < 0 or channels.max() >= order.size):
            raise ValueError("channel index out of range")
        return order[channels.astype(np.int64)]


def standard_split(index: int, class_count: int = 20, novel_per_split: int = 5) -> ClassSplit:
    """Fold ``index`` of the usual rotation: novel ids are a contiguous
    block of ``novel_per_split`` ids, base ids are all the rest.

    ``standard_split(0)`` over 20 classes marks ids 1..5 novel and
    6..20 base.
    """
    if class_count <= 0 or novel_per_split <= 0:
        raise ValueError("class_count and novel_per_split must be positive")
    folds = class_count // novel_per_split
    if class_count % novel_per_split:
        raise ValueError(
            f"class_count {class_count} not divisible by novel_per_split {novel_per_split}"
        )
    if not 0 <= index < folds:
        raise ValueError(f"split index {index} out of range for {folds} folds")
    lo = index * novel_per_split + 1
    novel = tuple(range(lo, lo + novel_per_split))
    base = tuple(i for i in range(1, class_count + 1) if i not in novel)
    return ClassSplit(base_ids=base, novel_ids=novel)
