"""Tensor container and checkpoint files.

Single-tensor record layout (little-endian):
    magic   4 bytes  b"AXT1"
    rank    u32
    extents u32 * rank
    dtype   u8       0 = float32, 1 = float64
    values  raw IEEE-754, C order

A checkpoint is a directory holding params.axt (records back to back, in
manifest order) plus manifest.json listing parameter names, shapes, dtypes
and byte offsets. Malformed input raises SerializationError naming the byte
offset of the problem.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import SerializationError

MAGIC = b"AXT1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
MAX_RANK = 32


def tensor_bytes(arr: np.ndarray) -> bytes:
    """Encode one array as an AXT1 record."""
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise SerializationError(f"unsupported dtype {arr.dtype}, offset 8")
    parts = [MAGIC, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
    parts.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def read_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one record starting at offset. Returns (array, next offset)."""
    base = offset
    if buf[offset:offset + 4] != MAGIC:
        raise SerializationError(f"bad magic at offset {base}")
    offset += 4
    if len(buf) < offset + 4:
        raise SerializationError(f"truncated rank field at offset {offset}")
    (rank,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if rank > MAX_RANK:
        raise SerializationError(f"implausible rank {rank} at offset {offset - 4}")
    if len(buf) < offset + 4 * rank:
        raise SerializationError(f"truncated extents at offset {offset}")
    shape = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    if len(buf) < offset + 1:
        raise SerializationError(f"truncated dtype byte at offset {offset}")
    code = buf[offset]
    offset += 1
    if code not in _CODE_DTYPES:
        raise SerializationError(f"unknown dtype code {code} at offset {offset - 1}")
    dtype = _CODE_DTYPES[code]
    count = 1
    for s in shape:
        count *= s
    nbytes = count * dtype.itemsize
    if len(buf) < offset + nbytes:
        raise SerializationError(f"truncated values at offset {offset}: "
                                 f"need {nbytes} bytes, have {len(buf) - offset}")
    arr = np.frombuffer(buf[offset:offset + nbytes], dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("=")), offset + nbytes


def save_tensor(path, arr: np.ndarray):
    Path(path).write_bytes(tensor_bytes(arr))


def load_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = read_tensor(buf, 0)
    if end != len(buf):
        raise SerializationError(f"trailing bytes at offset {end}")
    return arr


def save_checkpoint(dirpath, named_params: list[tuple[str, np.ndarray]], extra: dict | None = None):
    """Write manifest.json + params.axt into dirpath."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, arr in named_params:
        rec = tensor_bytes(arr)
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": str(np.asarray(arr).dtype),
            "offset": offset,
        })
        blobs.append(rec)
        offset += len(rec)
    manifest = {"format": "AXT1", "params": entries,
                "total_parameters": int(sum(np.asarray(a).size for _, a in named_params))}
    if extra:
        manifest.update(extra)
    (d / "params.axt").write_bytes(b"".join(blobs))
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(dirpath) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint directory. Returns (manifest, {name: array})."""
    d = Path(dirpath)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except json.JSONDecodeError as e:
        raise SerializationError(f"manifest.json is not valid JSON: {e}") from e
    buf = (d / "params.axt").read_bytes()
    params: dict[str, np.ndarray] = {}
    for entry in manifest.get("params", []):
        arr, _ = read_tensor(buf, entry["offset"])
        if list(arr.shape) != list(entry["shape"]):
            raise SerializationError(
                f"shape mismatch for {entry['name']!r} at offset {entry['offset']}: "
                f"manifest says {entry['shape']}, record has {list(arr.shape)}")
        params[entry["name"]] = arr
    return manifest, params
