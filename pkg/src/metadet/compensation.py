"""Cross-level compensation: deep-minus-shallow differential features fused
with the metadata vector into one guidance vector per sample and level.

A shallow pyramid level is aligned to the deepest level's channel count and
spatial extents by a strided conv chain, subtracted from the deepest level,
pooled, squeezed through a bottleneck, concatenated with the metadata vector
and pushed through a small residual MLP. Every level yields a guidance
vector of the same width d_a regardless of its own channel count.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .metadata import ResidualMLPBlock
from .nn import (Conv2d, Linear, Module, RngStream, Tensor, concat,
                 global_avg_pool, relu, sub)

COMPENSATION_MODES = ("bottleneck", "pooled_raw")


class AlignmentChain(Module):
    """Maps a level to the reference level's channels and extents.

    ratio is the spatial size quotient (must be a power of two): ratio 1 is a
    single 1x1 conv, ratio 2^k is k strided 3x3 convs with the first one
    switching the channel count.
    """

    def __init__(self, c_in: int, ratio: int, c_ref: int, rng: RngStream, dtype=np.float64):
        super().__init__()
        if ratio < 1 or (ratio & (ratio - 1)) != 0:
            raise ConfigError(f"alignment ratio must be a power of two, got {ratio}")
        self.ratio = ratio
        if ratio == 1:
            self.convs = [Conv2d(c_in, c_ref, 1, stride=1, padding=0, rng=rng.split(0), dtype=dtype)]
        else:
            steps = ratio.bit_length() - 1
            self.convs = [Conv2d(c_in if i == 0 else c_ref, c_ref, 3, stride=2, padding=1,
                                 rng=rng.split(i), dtype=dtype)
                          for i in range(steps)]

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = conv.forward(x)
        return x


def differential(aligned: Tensor, reference: Tensor) -> Tensor:
    """Elementwise aligned - reference; shapes must already agree."""
    if aligned.shape != reference.shape:
        raise ConfigError(f"differential: shapes differ {aligned.shape} vs {reference.shape}")
    return sub(aligned, reference)


class LevelCompensation(Module):
    """Guidance vector builder for one pyramid level."""

    def __init__(self, c_in: int, ratio: int, c_ref: int, d_z: int, d_a: int,
                 rng: RngStream, dtype=np.float64, mode: str = "bottleneck"):
        super().__init__()
        if mode not in COMPENSATION_MODES:
            raise ConfigError(f"compensation mode {mode!r} not in {COMPENSATION_MODES}")
        self.mode = mode
        self.align = AlignmentChain(c_in, ratio, c_ref, rng.split(0), dtype)
        if mode == "bottleneck":
            if c_ref % 4 != 0:
                raise ConfigError(f"reference channel count {c_ref} not divisible by 4")
            self.squeeze = Linear(c_ref, c_ref // 4, rng=rng.split(1), dtype=dtype)
            fuse_in = c_ref // 4 + d_z
        else:
            self.squeeze = None
            fuse_in = c_ref + d_z
        self.fuse_in = Linear(fuse_in, d_a, rng=rng.split(2), dtype=dtype, exact_rows=True)
        self.stages = [ResidualMLPBlock(d_a, rng.split(3 + i), 0.0, dtype) for i in range(3)]
        self.d_a = d_a

    def visual_vector(self, x_level: Tensor, x_ref: Tensor) -> Tensor:
        """Pooled differential descriptor (the bottleneck output when enabled)."""
        delta = differential(self.align.forward(x_level), x_ref)
        pooled = global_avg_pool(delta)
        if self.squeeze is not None:
            return relu(self.squeeze.forward(pooled))
        return pooled

    def forward(self, x_level: Tensor, x_ref: Tensor, z: Tensor) -> Tensor:
        v = self.visual_vector(x_level, x_ref)
        a = self.fuse_in.forward(concat([v, z], axis=1))
        for st in self.stages:
            a = st.forward(a, None)
        return a
