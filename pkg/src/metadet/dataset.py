"""Dataset files on disk and their in-memory form.

Layout: root/{train,val}/images/NNNNN.pgm, root/{split}/meta.jsonl (one
JSON object per image, keys image/platform/band/width/height/boxes, image
path relative to the split directory), root/manifest.json with the seed,
split counts and profile versions.

Images are 8-bit binary PGM (P5). The loader checks every image against
its sidecar line and resizes to the training resolution, scaling boxes
with it; metadata keeps the native resolution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .metadata import MetadataRecord, parse_sidecar_line


def write_pgm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise DataError(f"PGM writer wants a 2D uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if not buf.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (missing P5 magic)")
    # header: magic, width, height, maxval, single whitespace, then raster
    fields: list[bytes] = []
    i = 2
    while len(fields) < 3:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if i < len(buf) and buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(buf) and not buf[i:i + 1].isspace():
            i += 1
        if start == i:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(buf[start:i])
    i += 1  # the single whitespace byte after maxval
    try:
        w, h, maxval = (int(v) for v in fields)
    except ValueError:
        raise DataError(f"{path}: non-numeric PGM header fields {fields}") from None
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    data = buf[i:]
    if len(data) != w * h:
        raise DataError(f"{path}: raster has {len(data)} bytes, expected {w * h}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2D float array, pixel-center convention."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


@dataclass
class DetectionSample:
    """One training-ready sample: resized image plus native metadata."""
    image: np.ndarray          # (1, S, S) float32 in [0, 1]
    boxes: np.ndarray          # (N, 4) float32, resized coordinates
    record: MetadataRecord     # native width/height
    path: str

    def __post_init__(self):
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise DataError(f"{self.path}: image values outside [0, 1]")
        for x1, y1, x2, y2 in self.boxes:
            if not (x1 < x2 and y1 < y2):
                raise DataError(f"{self.path}: degenerate box after resize")


def load_split(root, split: str, image_size: int = 128) -> list[DetectionSample]:
    """Read one split, validate images against the sidecar, resize."""
    split_dir = Path(root) / split
    sidecar = split_dir / "meta.jsonl"
    if not sidecar.exists():
        raise DataError(f"missing sidecar {sidecar}")
    samples: list[DetectionSample] = []
    for lineno, line in enumerate(sidecar.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rel, record, boxes = parse_sidecar_line(line)
        except DataError as e:
            raise DataError(f"{sidecar}:{lineno}: {e}") from e
        img_path = split_dir / rel
        raw = read_pgm(img_path)
        if raw.shape != (record.height, record.width):
            raise DataError(f"{img_path}: raster {raw.shape[::-1]} != sidecar "
                            f"{record.width}x{record.height}")
        img = resize_bilinear(raw.astype(np.float64) / 255.0, image_size, image_size)
        sx = image_size / record.width
        sy = image_size / record.height
        scaled = boxes * np.array([sx, sy, sx, sy])
        samples.append(DetectionSample(
            image=np.clip(img, 0.0, 1.0)[None].astype(np.float32),
            boxes=scaled.astype(np.float32),
            record=record,
            path=str(img_path),
        ))
    return samples


def read_manifest(root) -> dict:
    p = Path(root) / "manifest.json"
    try:
        return json.loads(p.read_text())
    except FileNotFoundError:
        raise DataError(f"missing dataset manifest {p}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{p}: invalid JSON: {e}") from e


def dataset_digest(root) -> str:
    """SHA-256 over the manifest, sidecars and image bytes, path-ordered."""
    root = Path(root)
    h = hashlib.sha256()
    files = sorted(p for p in root.rglob("*") if p.is_file())
    for p in files:
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()
