import numpy as np
import pytest

from sstrack.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip(tmp_path, rng):
    tensors = {
        "a.w": rng.standard_normal((3, 4)).astype(np.float32),
        "b": np.array(2.5, dtype=np.float32),
    }
    meta = {"model_config": "{}", "epoch": 3}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors, meta)
    back, meta2 = load_checkpoint(path)
    assert meta2 == meta
    np.testing.assert_array_equal(back["a.w"], tensors["a.w"])
    np.testing.assert_array_equal(back["b"], tensors["b"])


def test_casts_to_float32(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", {"x": np.arange(4, dtype=np.float64)})
    back, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert back["x"].dtype == np.float32


def test_magic_bytes(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"x": np.zeros(1, dtype=np.float32)})
    assert path.read_bytes()[:8] == MAGIC == b"SSTCKPT1"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_blob_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"x": np.zeros(8, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_little_endian_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"x": np.array([1.0], dtype=np.float32)})
    raw = path.read_bytes()
    assert raw[-4:] == np.array([1.0], dtype="<f4").tobytes()
