import struct

import numpy as np
import pytest

from app.core.exceptions import TensorFileError
from app.engine.network import build_network
from app.engine.serialization import (
    decode_tensor,
    load_network_weights,
    load_weights,
    read_tensor,
    save_weights,
    tensor_summary,
    write_tensor,
)


class TestTensorFiles:
    """Pruebas del formato BHRT"""

    def test_write_and_read(self, tmp_path, rng):
        tensor = rng.normal(0, 1, (1, 3, 4, 5)).astype(np.float32)
        path = tmp_path / "image.bhrt"
        write_tensor(path, tensor)
        restored = read_tensor(path)
        assert restored.dtype == np.float32
        np.testing.assert_array_equal(restored, tensor)

    def test_layout_is_little_endian(self, tmp_path):
        path = tmp_path / "t.bhrt"
        write_tensor(path, np.array([[1.0, 2.0]], np.float32))
        data = path.read_bytes()
        assert data[:4] == b"BHRT"
        assert struct.unpack("<III", data[4:16]) == (2, 1, 2)
        assert struct.unpack("<ff", data[16:]) == (1.0, 2.0)

    def test_bad_magic(self):
        with pytest.raises(TensorFileError):
            decode_tensor(b"XXXX" + struct.pack("<I", 0))

    def test_truncated(self):
        data = b"BHRT" + struct.pack("<II", 1, 4) + struct.pack("<f", 1.0)
        with pytest.raises(TensorFileError) as info:
            decode_tensor(data)
        assert info.value.details["needed"] == 16

    def test_huge_extents_are_reported_as_truncation(self):
        # 2**31 * 2**31 * 4 desborda int64 a cero
        data = b"BHRT" + struct.pack("<IIII", 3, 2**31, 2**31, 4)
        with pytest.raises(TensorFileError) as info:
            decode_tensor(data)
        assert info.value.details["needed"] == 2**64 * 4

    def test_trailing_bytes(self):
        data = b"BHRT" + struct.pack("<II", 1, 1) + struct.pack("<f", 1.0) + b"\x00"
        with pytest.raises(TensorFileError):
            decode_tensor(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(TensorFileError):
            read_tensor(tmp_path / "nope.bhrt")

    def test_summary(self):
        assert tensor_summary(np.array([[-1.0, 3.0]])) == ((1, 2), -1.0, 3.0)
        assert tensor_summary(np.zeros((0, 2))) == ((0, 2), 0.0, 0.0)


class TestWeightFiles:
    """Pruebas del formato BHRW"""

    def test_save_and_load_preserve_order(self, tmp_path, rng):
        params = {
            "b.weight": rng.normal(0, 1, (2, 3, 1, 1)).astype(np.float32),
            "a.bias": rng.normal(0, 1, (2,)).astype(np.float32),
        }
        path = tmp_path / "w.bhrw"
        save_weights(path, params)
        loaded = load_weights(path)
        assert list(loaded) == ["b.weight", "a.bias"]
        for name, value in params.items():
            np.testing.assert_array_equal(loaded[name], value)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "w.bhrw"
        path.write_bytes(b"BHRW" + struct.pack("<II", 2, 0))
        with pytest.raises(TensorFileError):
            load_weights(path)

    def test_duplicate_names(self, tmp_path):
        entry = struct.pack("<I", 1) + b"w" + struct.pack("<II", 1, 1) + struct.pack("<f", 0.5)
        path = tmp_path / "w.bhrw"
        path.write_bytes(b"BHRW" + struct.pack("<II", 1, 2) + entry + entry)
        with pytest.raises(TensorFileError):
            load_weights(path)

    def test_network_round_trip(self, tmp_path, small_spec):
        net = build_network(small_spec, init="random", seed=2)
        path = tmp_path / "small.bhrw"
        save_weights(path, net.params)
        restored = load_network_weights(build_network(small_spec), path)
        image = np.random.default_rng(0).uniform(0, 1, (1, 3, 16, 16)).astype(np.float32)
        for actual, expected in zip(restored(image), net(image)):
            np.testing.assert_array_equal(actual, expected)

    def test_inventory_mismatch(self, tmp_path, small_spec):
        params = dict(build_network(small_spec).params)
        del params["head.final.bias"]
        path = tmp_path / "partial.bhrw"
        save_weights(path, params)
        with pytest.raises(TensorFileError):
            load_network_weights(build_network(small_spec), path)
