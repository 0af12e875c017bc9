"""Per-image capture metadata: vocabulary, encoding, sidecar codec.

Categorical components (platform, spectral band) are one-hot indexed in a
fixed order and projected through learnable tables. Resolution enters as a
periodic six-component embedding: sines of (w/sigma_w, h/sigma_h, w/h)
followed by the matching cosines. The three projections are concatenated
(resolution, platform, band) and fused by a small residual MLP into one
conditioning vector per sample.

Masking a component (for ablations) replaces its projection with zeros of
the same width before fusion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError, VocabularyError
from .nn import (Module, Parameter, RngStream, Tensor, concat, dropout,
                 linear, relu, take_rows)

PLATFORMS = ("land", "air", "space")
BANDS = ("LWIR", "NIR", "SWIR")
MASKABLE = ("platform", "resolution", "band")

SIDECAR_KEYS = ("image", "platform", "band", "width", "height", "boxes")


@dataclass(frozen=True)
class MetadataRecord:
    platform: str
    band: str
    width: int
    height: int

    def __post_init__(self):
        if self.platform not in PLATFORMS:
            raise VocabularyError(f"unknown platform {self.platform!r}, expected one of {PLATFORMS}")
        if self.band not in BANDS:
            raise VocabularyError(f"unknown band {self.band!r}, expected one of {BANDS}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ShapeError(f"non-positive image dimensions {self.width}x{self.height}")


def platform_index(platform: str) -> int:
    return PLATFORMS.index(platform)


def band_index(band: str) -> int:
    return BANDS.index(band)


def one_hot_platform(platform: str) -> np.ndarray:
    v = np.zeros(3)
    v[platform_index(platform)] = 1.0
    return v


def one_hot_band(band: str) -> np.ndarray:
    v = np.zeros(3)
    v[band_index(band)] = 1.0
    return v


def embed_resolution(width: float, height: float,
                     sigma_w: float = 6000.0, sigma_h: float = 6000.0) -> np.ndarray:
    """Six periodic components: sin then cos of (w/sigma_w, h/sigma_h, w/h)."""
    if width <= 0 or height <= 0:
        raise ShapeError(f"non-positive dimensions {width}x{height}")
    args = (width / sigma_w, height / sigma_h, width / height)
    return np.array([math.sin(a) for a in args] + [math.cos(a) for a in args])


class ResidualMLPBlock(Module):
    """x + Dropout(W2 relu(W1 x + b1) + b2), width preserved."""

    def __init__(self, width: int, rng: RngStream, p_drop: float, dtype):
        super().__init__()
        std = math.sqrt(2.0 / width)
        self.w1 = Parameter(rng.normal((width, width), std, dtype), "w1")
        self.b1 = Parameter(np.zeros(width, dtype), "b1")
        self.w2 = Parameter(rng.normal((width, width), std, dtype), "w2")
        self.b2 = Parameter(np.zeros(width, dtype), "b2")
        self.p_drop = p_drop

    def forward(self, x: Tensor, rng: RngStream | None) -> Tensor:
        h = relu(linear(x, self.w1, self.b1, exact_rows=True))
        h = linear(h, self.w2, self.b2, exact_rows=True)
        h = dropout(h, self.p_drop, rng, self.training)
        return x + h


class MetadataEncoder(Module):
    """Fuses (platform, band, resolution) into one vector per sample.

    Output width d_z must equal d_resolution + d_platform + d_band so the
    residual fusion blocks preserve the concatenation width.
    """

    def __init__(self, rng: RngStream, d_platform: int = 8, d_band: int = 8,
                 d_resolution: int = 16, n_blocks: int = 2, p_drop: float = 0.1,
                 sigma_w: float = 6000.0, sigma_h: float = 6000.0,
                 dtype=np.float64):
        super().__init__()
        self.d_platform, self.d_band, self.d_resolution = d_platform, d_band, d_resolution
        self.d_z = d_resolution + d_platform + d_band
        self.sigma_w, self.sigma_h = float(sigma_w), float(sigma_h)
        self.dtype = np.dtype(dtype)
        self.w_platform = Parameter(rng.normal((3, d_platform), math.sqrt(1.0 / 3), dtype), "w_platform")
        self.w_band = Parameter(rng.normal((3, d_band), math.sqrt(1.0 / 3), dtype), "w_band")
        self.w_resolution = Parameter(rng.normal((6, d_resolution), math.sqrt(1.0 / 6), dtype), "w_resolution")
        self.blocks = [ResidualMLPBlock(self.d_z, rng.split(i + 1), p_drop, dtype)
                       for i in range(n_blocks)]

    def component_tensors(self, records: list[MetadataRecord],
                          mask: frozenset | set | tuple = ()) -> list[Tensor]:
        """Projected (resolution, platform, band) embeddings, zeros where masked."""
        for m in mask:
            if m not in MASKABLE:
                raise VocabularyError(f"unknown metadata mask {m!r}, expected subset of {MASKABLE}")
        B = len(records)
        if "resolution" in mask:
            zr = Tensor(np.zeros((B, self.d_resolution), self.dtype))
        else:
            raw = np.stack([embed_resolution(r.width, r.height, self.sigma_w, self.sigma_h)
                            for r in records]).astype(self.dtype)
            zr = linear(Tensor(raw), self.w_resolution, exact_rows=True)
        if "platform" in mask:
            zp = Tensor(np.zeros((B, self.d_platform), self.dtype))
        else:
            zp = take_rows(self.w_platform, [platform_index(r.platform) for r in records])
        if "band" in mask:
            zb = Tensor(np.zeros((B, self.d_band), self.dtype))
        else:
            zb = take_rows(self.w_band, [band_index(r.band) for r in records])
        return [zr, zp, zb]

    def forward(self, records: list[MetadataRecord], rng: RngStream | None = None,
                mask: frozenset | set | tuple = ()) -> Tensor:
        if self.training and self.blocks and self.blocks[0].p_drop > 0 and rng is None:
            raise ValueError("training-mode encoding needs an RngStream for dropout")
        z = concat(self.component_tensors(records, mask), axis=1)
        for i, blk in enumerate(self.blocks):
            z = blk.forward(z, rng.split(i) if rng is not None else None)
        return z


# -- sidecar line codec ---------------------------------------------------------

def format_sidecar_line(image: str, record: MetadataRecord, boxes) -> str:
    """One JSONL line of the dataset sidecar. Key order is fixed."""
    obj = {
        "image": image,
        "platform": record.platform,
        "band": record.band,
        "width": int(record.width),
        "height": int(record.height),
        "boxes": [[float(v) for v in b] for b in boxes],
    }
    return json.dumps(obj, separators=(",", ":"))


def parse_sidecar_line(line: str) -> tuple[str, MetadataRecord, np.ndarray]:
    """Parse and validate one sidecar line. Returns (image, record, boxes[N,4])."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"sidecar line is not valid JSON: {e}") from e
    if not isinstance(obj, dict) or set(obj.keys()) != set(SIDECAR_KEYS):
        raise DataError(f"sidecar line must have exactly keys {SIDECAR_KEYS}, "
                        f"got {sorted(obj.keys()) if isinstance(obj, dict) else type(obj)}")
    if not isinstance(obj["width"], int) or not isinstance(obj["height"], int):
        raise DataError("width/height must be integers")
    record = MetadataRecord(obj["platform"], obj["band"], obj["width"], obj["height"])
    boxes = np.asarray(obj["boxes"], dtype=np.float64)
    if boxes.size == 0:
        boxes = boxes.reshape(0, 4)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise DataError(f"boxes must be Nx4, got shape {boxes.shape}")
    for x1, y1, x2, y2 in boxes:
        if not (0 <= x1 < x2 <= record.width and 0 <= y1 < y2 <= record.height):
            raise DataError(f"box [{x1},{y1},{x2},{y2}] not inside {record.width}x{record.height}")
    return obj["image"], record, boxes
