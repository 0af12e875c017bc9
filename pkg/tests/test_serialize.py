"""Tensor container format and checkpoint directories."""

import json

import numpy as np
import pytest

from metadet.errors import SerializationError
from metadet.nn.serialize import (load_checkpoint, load_tensor, read_tensor,
                                  save_checkpoint, save_tensor, tensor_bytes)


def test_roundtrip_dtypes_and_shapes(tmp_path):
    cases = [
        np.arange(12, dtype=np.float32).reshape(3, 4),
        np.arange(8, dtype=np.float64).reshape(2, 2, 2),
        np.array(3.5, dtype=np.float32),          # rank 0
        np.zeros((0, 5), dtype=np.float64),       # empty extent
        np.linspace(-1, 1, 7, dtype=np.float32),
    ]
    for i, arr in enumerate(cases):
        p = tmp_path / f"t{i}.axt"
        save_tensor(p, arr)
        back = load_tensor(p)
        assert back.dtype == arr.dtype
        assert back.shape == arr.shape
        np.testing.assert_array_equal(back, arr)


def test_bytes_are_deterministic():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    assert tensor_bytes(arr) == tensor_bytes(arr.copy())


def test_unsupported_dtype_rejected():
    with pytest.raises(SerializationError):
        tensor_bytes(np.arange(4, dtype=np.int32))


def test_bad_magic_names_offset():
    buf = b"XXXX" + tensor_bytes(np.zeros(2, dtype=np.float32))[4:]
    with pytest.raises(SerializationError, match="offset 0"):
        read_tensor(buf)


def test_truncated_values_names_offset():
    rec = tensor_bytes(np.ones((2, 2), dtype=np.float64))
    with pytest.raises(SerializationError, match="truncated values"):
        read_tensor(rec[:-8])


def test_truncated_header():
    rec = tensor_bytes(np.ones(3, dtype=np.float32))
    with pytest.raises(SerializationError):
        read_tensor(rec[:6])


def test_unknown_dtype_code():
    rec = bytearray(tensor_bytes(np.ones(2, dtype=np.float32)))
    # layout: magic(4) rank(4) extents(4) dtype(1) ...
    rec[12] = 99
    with pytest.raises(SerializationError, match="dtype code 99"):
        read_tensor(bytes(rec))


def test_implausible_rank_rejected():
    rec = bytearray(tensor_bytes(np.ones(2, dtype=np.float32)))
    rec[4:8] = (10 ** 6).to_bytes(4, "little")
    with pytest.raises(SerializationError, match="rank"):
        read_tensor(bytes(rec))


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "t.axt"
    save_tensor(p, np.ones(2, dtype=np.float32))
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(SerializationError, match="trailing"):
        load_tensor(p)


def test_multiple_records_in_one_buffer():
    a = np.ones((2, 2), dtype=np.float32)
    b = np.full((3,), 7.0, dtype=np.float64)
    buf = tensor_bytes(a) + tensor_bytes(b)
    got_a, off = read_tensor(buf, 0)
    got_b, end = read_tensor(buf, off)
    np.testing.assert_array_equal(got_a, a)
    np.testing.assert_array_equal(got_b, b)
    assert end == len(buf)


def test_checkpoint_roundtrip(tmp_path):
    named = [("stem.w", np.arange(18, dtype=np.float32).reshape(2, 1, 3, 3)),
             ("stem.b", np.zeros(2, dtype=np.float32)),
             ("head.w", np.ones((4, 4), dtype=np.float64))]
    save_checkpoint(tmp_path / "ck", named, extra={"seed": 3})
    manifest, params = load_checkpoint(tmp_path / "ck")
    assert manifest["seed"] == 3
    assert manifest["total_parameters"] == 18 + 2 + 16
    assert list(params) == ["stem.w", "stem.b", "head.w"]
    for name, arr in named:
        np.testing.assert_array_equal(params[name], arr)
        assert params[name].dtype == arr.dtype


def test_checkpoint_detects_manifest_shape_lie(tmp_path):
    save_checkpoint(tmp_path / "ck", [("w", np.ones((2, 3), dtype=np.float32))])
    mpath = tmp_path / "ck" / "manifest.json"
    m = json.loads(mpath.read_text())
    m["params"][0]["shape"] = [3, 2]
    mpath.write_text(json.dumps(m))
    with pytest.raises(SerializationError, match="shape mismatch"):
        load_checkpoint(tmp_path / "ck")


def test_checkpoint_bad_manifest_json(tmp_path):
    save_checkpoint(tmp_path / "ck", [("w", np.ones(2, dtype=np.float32))])
    (tmp_path / "ck" / "manifest.json").write_text("{not json")
    with pytest.raises(SerializationError, match="JSON"):
        load_checkpoint(tmp_path / "ck")


def test_checkpoint_corrupt_offset_names_offset(tmp_path):
    save_checkpoint(tmp_path / "ck", [("w", np.ones(4, dtype=np.float32))])
    mpath = tmp_path / "ck" / "manifest.json"
    m = json.loads(mpath.read_text())
    m["params"][0]["offset"] = 2     # lands mid-magic
    mpath.write_text(json.dumps(m))
    with pytest.raises(SerializationError, match="offset 2"):
        load_checkpoint(tmp_path / "ck")
