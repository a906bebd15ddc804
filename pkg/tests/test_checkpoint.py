import numpy as np
import pytest

from gfss.numcore import CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(8)
    tensors = {
        "encoder.block.0.weight": rng.standard_normal((4, 7)).astype(np.float32),
        "decoder.bias": rng.standard_normal(3).astype(np.float32),
        "scalar": np.float32(0.25).reshape(()),
    }
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(tensors)  # order preserved
    for name, arr in tensors.items():
        assert loaded[name].shape == np.asarray(arr).shape
        assert loaded[name].tobytes() == np.asarray(arr, np.float32).tobytes()


def test_empty_checkpoint(tmp_path):
    path = tmp_path / "empty.ckpt"
    save_checkpoint(path, {})
    assert load_checkpoint(path) == {}


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTRIGHT" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "v.ckpt"
    save_checkpoint(path, {"a": np.zeros(2, np.float32)})
    raw = bytearray(path.read_bytes())
    raw[8] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"a": np.arange(16, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_float64_input_saved_as_float32(tmp_path):
    path = tmp_path / "f.ckpt"
    save_checkpoint(path, {"a": np.array([1.5, 2.5], np.float64)})
    out = load_checkpoint(path)["a"]
    assert out.dtype == np.float32
    assert np.allclose(out, [1.5, 2.5])
