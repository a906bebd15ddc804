import numpy as np
import pytest

from gfss.splits import IGNORE_ID, ClassSplit, standard_split


def test_standard_split_zero_layout():
    s = standard_split(0)
    assert s.novel_ids == (1, 2, 3, 4, 5)
    assert s.base_ids == tuple(range(6, 21))
    assert s.base_channel_count == 16
    assert s.channel_count == 21


def test_standard_split_rotation():
    s1 = standard_split(1)
    assert s1.novel_ids == (6, 7, 8, 9, 10)
    assert 1 in s1.base_ids and 6 not in s1.base_ids
    s3 = standard_split(3)
    assert s3.novel_ids == (16, 17, 18, 19, 20)


def test_standard_split_bad_index():
    with pytest.raises(ValueError):
        standard_split(4)  # only folds 0..3 exist for 20/5
    with pytest.raises(ValueError):
        standard_split(-1)


def test_channel_order_round_trip():
    s = standard_split(2)
    for ch, cid in enumerate(s.channel_order()):
        assert s.channel_for_id(cid) == ch
        assert s.id_for_channel(ch) == cid
    with pytest.raises(KeyError):
        s.channel_for_id(99)
    with pytest.raises(KeyError):
        s.id_for_channel(21)


def test_validation_rejects_bad_groups():
    with pytest.raises(ValueError):
        ClassSplit(base_ids=(), novel_ids=(1,))
    with pytest.raises(ValueError):
        ClassSplit(base_ids=(1, 2), novel_ids=(2,))
    with pytest.raises(ValueError):
        ClassSplit(base_ids=(0,), novel_ids=())
    with pytest.raises(ValueError):
        ClassSplit(base_ids=(IGNORE_ID,), novel_ids=())
    with pytest.raises(ValueError):
        ClassSplit(base_ids=(1, 1), novel_ids=())


def test_mask_to_channels_base_only():
    s = ClassSplit(base_ids=(3, 7), novel_ids=(5,))
    mask = np.array([[0, 3], [7, IGNORE_ID]], dtype=np.uint8)
    out = s.mask_to_channels(mask, include_novel=False)
    assert out.tolist() == [[0, 1], [2, IGNORE_ID]]


def test_mask_to_channels_with_novel():
    s = ClassSplit(base_ids=(3, 7), novel_ids=(5,))
    mask = np.array([0, 3, 7, 5], dtype=np.uint8)
    assert s.mask_to_channels(mask).tolist() == [0, 1, 2, 3]


def test_mask_to_channels_rejects_stray_ids():
    s = ClassSplit(base_ids=(3,), novel_ids=(5,))
    with pytest.raises(ValueError, match="outside the split"):
        s.mask_to_channels(np.array([4], dtype=np.uint8))
    # novel id is stray when include_novel is off
    with pytest.raises(ValueError, match="outside the split"):
        s.mask_to_channels(np.array([5], dtype=np.uint8), include_novel=False)
    with pytest.raises(ValueError):
        s.mask_to_channels(np.array([0.5]))


def test_channels_to_ids_inverse():
    s = standard_split(0)
    rng = np.random.default_rng(0)
    channels = rng.integers(0, s.channel_count, size=(9, 9))
    ids = s.channels_to_ids(channels)
    back = s.mask_to_channels(ids.astype(np.uint8))
    assert np.array_equal(back, channels)
    with pytest.raises(ValueError):
        s.channels_to_ids(np.array([21]))


def test_ignored_pixels_pass_through():
    s = standard_split(0)
    mask = np.full((4, 4), IGNORE_ID, dtype=np.uint8)
    out = s.mask_to_channels(mask)
    assert (out == IGNORE_ID).all()
