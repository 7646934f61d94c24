import struct

import numpy as np
import pytest

from utils.tensor_store import (
    MAGIC, TensorFormatError, decode_tensor, encode_tensor, load_checkpoint, read_tensor, save_checkpoint,
    write_tensor,
)


class TestTNSR:
    def test_layout(self):
        blob = encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert blob[:4] == MAGIC
        assert struct.unpack_from('<BBBB', blob, 4) == (1, 0, 2, 0)
        assert struct.unpack_from('<2I', blob, 8) == (2, 3)
        assert len(blob) == 8 + 8 + 6 * 4

    def test_decode(self):
        x = np.random.default_rng(0).standard_normal((3, 4, 5)).astype(np.float32)
        assert np.array_equal(decode_tensor(encode_tensor(x)), x)

    def test_float64_stored_as_f32(self, tmp_path):
        back = read_tensor(write_tensor(tmp_path / "x.tnsr", np.array([0.1, 0.2])))
        assert back.dtype == np.float32

    def test_bad_magic(self):
        with pytest.raises(TensorFormatError, match="magic"):
            decode_tensor(b'XXXX\x01\x00\x01\x00\x01\x00\x00\x00')

    def test_truncated_payload(self):
        blob = encode_tensor(np.zeros(4, np.float32))
        with pytest.raises(TensorFormatError, match="Payload"):
            decode_tensor(blob[:-2])

    def test_bad_version(self):
        blob = bytearray(encode_tensor(np.zeros(2, np.float32)))
        blob[4] = 9
        with pytest.raises(TensorFormatError, match="version"):
            decode_tensor(bytes(blob))


class TestCheckpoint:
    def test_round_trip_with_meta(self, tmp_path):
        tensors = {"conv_a1.w": np.ones((2, 2, 1, 3), np.float32), "out_a.b": np.zeros(5, np.float32)}
        save_checkpoint(tmp_path / "ck", tensors, {"kind": "avdcnn", "seed": "3"})
        back, meta = load_checkpoint(tmp_path / "ck")
        assert list(back) == list(tensors)
        assert meta == {"kind": "avdcnn", "seed": "3"}
        assert np.array_equal(back["conv_a1.w"], tensors["conv_a1.w"])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(TensorFormatError, match="manifest.txt"):
            load_checkpoint(tmp_path)

    def test_dims_mismatch(self, tmp_path):
        save_checkpoint(tmp_path, {"w": np.zeros((2, 3), np.float32)}, {})
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(manifest.read_text().replace("2x3", "3x2"))
        with pytest.raises(TensorFormatError, match="manifest says 3x2"):
            load_checkpoint(tmp_path)
