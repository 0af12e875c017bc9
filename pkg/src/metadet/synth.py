"""Synthetic small-target imagery across five sensing domains.

Each permitted (platform, band) pair gets a profile: a background family,
a base-level range, and a target regime (shape, size, contrast, polarity).
Two profiles are deliberately confusable: the air LWIR and space NIR
backgrounds are drawn from the same cloud distribution and differ only in
target polarity (bright versus dark). On top of that, both cloud domains
scatter decoy blobs of the opposite polarity, sampled from the same shape,
size and contrast family as the targets and left out of the annotations.
A scene from either domain therefore contains bright and dark blobs of
identical statistics, and the pixels alone cannot say which polarity is
the annotated one; the platform and band fields of the sidecar can.

Backgrounds are octave value noise (bilinearly upsampled random grids with
smoothstep fractions); the sea family adds a directional sinusoid. Targets
are analytic: Gaussian points and spots, and soft-edged rotated ellipses
for extended targets. The additive contrast at a target centre equals the
profile's sampled contrast exactly, before 8-bit quantisation.

Generation is deterministic: image k of a split is rendered from the
substream seed -> split -> k, so any image can be reproduced in isolation.
Native sizes are multiples of 32 and vary per image; boxes live in native
pixel coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import write_pgm
from .errors import ConfigError
from .metadata import MetadataRecord, format_sidecar_line
from .nn import RngStream

PROFILE_VERSION = 1
PAIR_ORDER = (("land", "LWIR"), ("air", "LWIR"), ("space", "LWIR"),
              ("space", "NIR"), ("space", "SWIR"))


@dataclass(frozen=True)
class TargetSpec:
    kind: str                 # "point" | "spot" | "extended"
    contrast: tuple[float, float]
    polarity: int             # +1 bright, -1 dark
    sigma: tuple[float, float] = (1.0, 1.8)     # point/spot scale
    axes: tuple[float, float] = (4.0, 10.0)     # extended major half-axis
    n_targets: tuple[int, int] = (1, 3)         # inclusive


@dataclass(frozen=True)
class DomainProfile:
    platform: str
    band: str
    background: str           # "terrain" | "cloud" | "sea" | "smooth"
    base: tuple[float, float]
    texture_amp: float
    target: TargetSpec
    sizes: tuple[int, ...]    # native extents, multiples of 32
    decoys: bool = False      # unannotated opposite-polarity blobs
    version: int = PROFILE_VERSION

    @property
    def name(self) -> str:
        return f"{self.platform}-{self.band}"


PROFILES: dict[tuple[str, str], DomainProfile] = {
    ("land", "LWIR"): DomainProfile(
        "land", "LWIR", "terrain", (0.38, 0.46), 0.12,
        TargetSpec("spot", (0.28, 0.40), +1, sigma=(1.2, 2.2)),
        (96, 128, 160)),
    ("air", "LWIR"): DomainProfile(
        "air", "LWIR", "cloud", (0.45, 0.55), 0.08,
        TargetSpec("spot", (0.20, 0.35), +1, sigma=(1.0, 1.8)),
        (128, 160, 192), decoys=True, version=2),
    ("space", "LWIR"): DomainProfile(
        "space", "LWIR", "sea", (0.30, 0.38), 0.11,
        TargetSpec("extended", (0.30, 0.48), +1, axes=(4.0, 10.0),
                   n_targets=(1, 2)),
        (128, 192, 256)),
    ("space", "NIR"): DomainProfile(
        "space", "NIR", "cloud", (0.45, 0.55), 0.08,
        TargetSpec("spot", (0.20, 0.35), -1, sigma=(1.0, 1.8)),
        (160, 192, 256), decoys=True, version=2),
    ("space", "SWIR"): DomainProfile(
        "space", "SWIR", "smooth", (0.12, 0.18), 0.03,
        TargetSpec("point", (0.16, 0.28), +1, sigma=(0.7, 1.1)),
        (96, 128, 192)),
}


def _upsample_grid(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear upsample with smoothstep fractions (classic value noise)."""
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    y0 = np.minimum(ys.astype(int), gh - 2)
    x0 = np.minimum(xs.astype(int), gw - 2)
    fy = ys - y0
    fx = xs - x0
    fy = (fy * fy * (3.0 - 2.0 * fy))[:, None]
    fx = (fx * fx * (3.0 - 2.0 * fx))[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - fx) + grid[np.ix_(y0, x0 + 1)] * fx
    bot = grid[np.ix_(y0 + 1, x0)] * (1 - fx) + grid[np.ix_(y0 + 1, x0 + 1)] * fx
    return top * (1 - fy) + bot * fy


def value_noise(rng: RngStream, h: int, w: int, octaves: int,
                persistence: float, base_cells: int) -> np.ndarray:
    """Multi-octave value noise, roughly in [-1, 1]."""
    acc = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        cells = base_cells * (1 << o)
        grid = rng.uniform((cells + 1, cells + 1), -1.0, 1.0)
        acc += amp * _upsample_grid(grid, h, w)
        total += amp
        amp *= persistence
    return acc / total


def render_background(profile: DomainProfile, rng: RngStream,
                      h: int, w: int) -> np.ndarray:
    base = rng.uniform((), profile.base[0], profile.base[1])
    kind = profile.background
    if kind == "terrain":
        tex = value_noise(rng, h, w, octaves=5, persistence=0.65, base_cells=6)
    elif kind == "cloud":
        tex = value_noise(rng, h, w, octaves=3, persistence=0.35, base_cells=2)
    elif kind == "smooth":
        tex = value_noise(rng, h, w, octaves=2, persistence=0.3, base_cells=2)
    elif kind == "sea":
        tex = 0.5 * value_noise(rng, h, w, octaves=3, persistence=0.4,
                                base_cells=2)
        theta = rng.uniform((), 0.0, math.pi)
        freq = rng.uniform((), 6.0, 14.0)
        phase = rng.uniform((), 0.0, 2.0 * math.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        carrier = (xx * math.cos(theta) + yy * math.sin(theta)) / max(h, w)
        tex = tex + 0.5 * np.sin(2.0 * math.pi * freq * carrier + phase)
    else:
        raise ConfigError(f"unknown background family {kind!r}")
    return base + profile.texture_amp * tex


def _boxes_clear(box, placed, gap: float = 2.0) -> bool:
    x1, y1, x2, y2 = box
    for px1, py1, px2, py2 in placed:
        if x1 - gap < px2 and px1 - gap < x2 and y1 - gap < py2 and py1 - gap < y2:
            return False
    return True


def _render_target(img: np.ndarray, rng: RngStream, spec: TargetSpec,
                   placed: list) -> tuple[list | None, float]:
    """Stamp one target; returns (box, contrast) or (None, 0) if no spot fits."""
    h, w = img.shape
    c = rng.uniform((), spec.contrast[0], spec.contrast[1])
    if spec.kind == "extended":
        a = rng.uniform((), spec.axes[0], spec.axes[1])
        b = rng.uniform((), 0.45 * a, 0.8 * a)
        t = rng.uniform((), 0.0, math.pi)
        ex = math.sqrt((a * math.cos(t)) ** 2 + (b * math.sin(t)) ** 2)
        ey = math.sqrt((a * math.sin(t)) ** 2 + (b * math.cos(t)) ** 2)
    else:
        sigma = rng.uniform((), spec.sigma[0], spec.sigma[1])
        ex = ey = max(1.2, 2.5 * sigma)
    for _ in range(80):
        cx = rng.uniform((), ex + 2.0, w - ex - 2.0)
        cy = rng.uniform((), ey + 2.0, h - ey - 2.0)
        box = [cx - ex, cy - ey, cx + ex, cy + ey]
        if _boxes_clear(box, placed):
            break
    else:
        return None, 0.0
    yy, xx = np.mgrid[0:h, 0:w]
    if spec.kind == "extended":
        dx, dy = xx - cx, yy - cy
        u = (dx * math.cos(t) + dy * math.sin(t)) / a
        v = (-dx * math.sin(t) + dy * math.cos(t)) / b
        rho = np.sqrt(u * u + v * v)
        # soft-edged plateau: ~1 inside the ellipse, smooth falloff at rim
        shape = 1.0 / (1.0 + np.exp(np.clip(8.0 * (rho - 0.8), -60.0, 60.0)))
        shape /= shape.max()
    else:
        r2 = (xx - cx) ** 2 + (yy - cy) ** 2
        shape = np.exp(-r2 / (2.0 * sigma * sigma))
    img += spec.polarity * c * shape
    return box, c


def render_image(profile: DomainProfile, rng: RngStream):
    """One image from its substream.

    Returns (img_u8, boxes (N,4) float64 native coords, record,
    contrasts (N,), background float field). The background draw comes
    first so the float field is reproducible for analysis.

    Profiles with ``decoys`` stamp a second batch of blobs after the
    targets: same count, shape and contrast distributions, opposite
    polarity, disjoint from every annotated box, and absent from the
    returned boxes. They make per-blob polarity uninformative on its
    own, so telling decoy from target requires the metadata sidecar.
    """
    w = int(rng.choice(profile.sizes))
    h = int(rng.choice(profile.sizes))
    bg = render_background(profile, rng, h, w)
    img = bg.copy()
    spec = profile.target
    n_want = int(rng.integers(spec.n_targets[0], spec.n_targets[1] + 1))
    boxes, contrasts = [], []
    for _ in range(n_want):
        box, c = _render_target(img, rng, spec, boxes)
        if box is not None:
            boxes.append(box)
            contrasts.append(c)
    if profile.decoys:
        flipped = replace(spec, polarity=-spec.polarity)
        n_decoy = int(rng.integers(spec.n_targets[0], spec.n_targets[1] + 1))
        occupied = list(boxes)
        for _ in range(n_decoy):
            box, _ = _render_target(img, rng, flipped, occupied)
            if box is not None:
                occupied.append(box)
    img_u8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    record = MetadataRecord(profile.platform, profile.band, w, h)
    return img_u8, np.asarray(boxes, dtype=np.float64), record, \
        np.asarray(contrasts), bg


def image_stream(seed: int, split: str, index: int) -> RngStream:
    """The canonical substream for image ``index`` of a split."""
    split_idx = {"train": 0, "val": 1}[split]
    return RngStream(seed).split(split_idx).split(index)


def generate_dataset(root, seed: int, train_count: int = 600,
                     val_count: int = 150) -> dict:
    """Write the full two-split dataset; returns the manifest dict.

    Domains are interleaved so every split is stratified: image i uses
    profile i mod 5. With counts divisible by 5 each pair gets an exact
    equal share.
    """
    root = Path(root)
    pairs = [PROFILES[p] for p in PAIR_ORDER]
    counts = {"train": int(train_count), "val": int(val_count)}
    for split, count in counts.items():
        img_dir = root / split / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        lines = []
        for i in range(count):
            profile = pairs[i % len(pairs)]
            rng = image_stream(seed, split, i)
            img, boxes, record, _, _ = render_image(profile, rng)
            rel = f"images/{i:05d}.pgm"
            write_pgm(img_dir / f"{i:05d}.pgm", img)
            lines.append(format_sidecar_line(rel, record, boxes))
        (root / split / "meta.jsonl").write_text("\n".join(lines) + "\n")
    manifest = {
        "seed": int(seed),
        "counts": counts,
        "profiles": {p.name: p.version for p in pairs},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
