"""Per-sample feature modulation driven by the guidance vector.

One projection cascade per site turns the pooled feature vector into a
per-sample latent (two stages whose weights are generated from the guidance
vector), then expands it into C channel gains plus 8 spatial kernel taps.
The channel branch gates channels; the spatial branch scatters the taps
into two zero-sum 3x3 kernels, convolves the channel-average and
channel-max maps with them per sample, and gates positions.

Kernel structure: corners are never written (exactly 0.0) and the center is
-((s1+s2)+(s3+s4)) with that fixed expression tree, so each emitted kernel
sums to exactly zero when the same tree is used to check it.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .nn import (Linear, Module, Parameter, RngStream, Tensor, add, bmm,
                 channel_avg, channel_max, concat, conv2d, global_avg_pool,
                 mul, narrow, neg, relu, reshape, sigmoid)

TOPOLOGIES = ("parallel", "channel_then_spatial", "spatial_then_channel",
              "channel_only", "spatial_only")
N_SPATIAL_TAPS = 8


class DynamicStage(Module):
    """relu(W(a) y + b(a)) with per-sample weights generated from a.

    The generator bias starts at a flattened identity so the stage opens as
    relu(y + perturbation); the generator weight is scaled down to keep the
    perturbation small at init.
    """

    def __init__(self, d_a: int, d: int, rng: RngStream, dtype=np.float64):
        super().__init__()
        self.d = d
        self.gen = Linear(d_a, d * d + d, rng=rng, dtype=dtype)
        self.gen.w.data *= 0.1
        bias = np.zeros(d * d + d, dtype)
        bias[:d * d] = np.eye(d, dtype=dtype).ravel()
        self.gen.b.data[:] = bias

    def forward(self, a: Tensor, y: Tensor) -> Tensor:
        B = y.shape[0]
        d = self.d
        g = self.gen.forward(a)
        w = reshape(narrow(g, 1, 0, d * d), (B, d, d))
        b = narrow(g, 1, d * d, d)
        out = reshape(bmm(w, reshape(y, (B, d, 1))), (B, d))
        return relu(add(out, b))


class ProjectionCascade(Module):
    """Pooled features -> latent -> d_out values, guided per sample."""

    def __init__(self, c: int, d_a: int, d_out: int, rng: RngStream, dtype=np.float64):
        super().__init__()
        d = c // 2
        if d < 1:
            raise ConfigError(f"channel count {c} too small for the latent bottleneck")
        self.d = d
        self.proj = Linear(c, d, bias=False, rng=rng.split(0), dtype=dtype)
        self.proj.w.data *= math.sqrt(0.5)  # fan-in scale without the relu gain
        self.stage1 = DynamicStage(d_a, d, rng.split(1), dtype)
        self.stage2 = DynamicStage(d_a, d, rng.split(2), dtype)
        self.expand = Linear(d, d_out, rng=rng.split(3), dtype=dtype)
        self.expand.w.data *= math.sqrt(0.5)

    def forward(self, x: Tensor, a: Tensor) -> Tensor:
        y = self.proj.forward(global_avg_pool(x))
        y = self.stage1.forward(a, y)
        y = self.stage2.forward(a, y)
        return self.expand.forward(y)


def build_spatial_kernels(sm: Tensor) -> tuple[Tensor, Tensor]:
    """Scatter (B,8) taps into two (B,1,3,3) zero-sum cross kernels.

    Taps 1-4 fill kernel one (top, left, right, bottom), taps 5-8 kernel
    two; each center is the exact negation of its four taps.
    """
    B, n = sm.shape
    if n != N_SPATIAL_TAPS:
        raise ConfigError(f"expected {N_SPATIAL_TAPS} spatial taps, got {n}")
    zero = Tensor(np.zeros((B, 1), sm.dtype))

    def one(base: int) -> Tensor:
        t1 = narrow(sm, 1, base + 0, 1)
        t2 = narrow(sm, 1, base + 1, 1)
        t3 = narrow(sm, 1, base + 2, 1)
        t4 = narrow(sm, 1, base + 3, 1)
        center = neg(add(add(t1, t2), add(t3, t4)))
        rows = concat([zero, t1, zero,
                       t2, center, t3,
                       zero, t4, zero], axis=1)
        return reshape(rows, (B, 1, 3, 3))

    return one(0), one(4)


def kernel_tree_sum(kernel: np.ndarray) -> np.ndarray:
    """Sum a (...,3,3) cross kernel with the construction's expression tree.

    Mirrors build_spatial_kernels exactly, so the result is 0.0 bit-for-bit
    for kernels it emitted.
    """
    t1, t2, t3, t4 = kernel[..., 0, 1], kernel[..., 1, 0], kernel[..., 1, 2], kernel[..., 2, 1]
    c = kernel[..., 1, 1]
    corners = ((kernel[..., 0, 0] + kernel[..., 0, 2])
               + (kernel[..., 2, 0] + kernel[..., 2, 2]))
    return (((t1 + t2) + (t3 + t4)) + c) + corners


def spatial_response(x: Tensor, k1: Tensor, k2: Tensor) -> Tensor:
    """Per-sample conv of the pooled maps: K1 * avg(x) + K2 * max(x).

    The batch is folded into channels and convolved with groups=B, which is
    bitwise identical to a per-sample loop of ungrouped convs.
    """
    B, _, H, W = x.shape
    f_avg = reshape(channel_avg(x), (1, B, H, W))
    f_max = reshape(channel_max(x), (1, B, H, W))
    r1 = conv2d(f_avg, k1, padding="same", groups=B)
    r2 = conv2d(f_max, k2, padding="same", groups=B)
    return reshape(add(r1, r2), (B, 1, H, W))


class FeatureModulator(Module):
    """Channel and spatial modulation for one embedding site."""

    def __init__(self, c: int, d_a: int, rng: RngStream, dtype=np.float64,
                 topology: str = "parallel", share_cascade: bool = True):
        super().__init__()
        if topology not in TOPOLOGIES:
            raise ConfigError(f"topology {topology!r} not in {TOPOLOGIES}")
        self.c = c
        self.topology = topology
        self.uses_channel = topology != "spatial_only"
        self.uses_spatial = topology != "channel_only"
        both = self.uses_channel and self.uses_spatial
        self.share_cascade = share_cascade and both
        if self.share_cascade:
            self.cascade = ProjectionCascade(c, d_a, c + N_SPATIAL_TAPS, rng.split(0), dtype)
        else:
            if self.uses_channel:
                self.cascade_c = ProjectionCascade(c, d_a, c, rng.split(0), dtype)
            if self.uses_spatial:
                self.cascade_s = ProjectionCascade(c, d_a, N_SPATIAL_TAPS, rng.split(1), dtype)

    def modulation_params(self, x: Tensor, a: Tensor) -> tuple[Tensor | None, Tensor | None]:
        """Channel gains cm (B,C) and spatial taps sm (B,8) from the site input.

        A branch the topology never applies has no cascade and yields None.
        """
        if self.share_cascade:
            e = self.cascade.forward(x, a)
            return narrow(e, 1, 0, self.c), narrow(e, 1, self.c, N_SPATIAL_TAPS)
        cm = self.cascade_c.forward(x, a) if self.uses_channel else None
        sm = self.cascade_s.forward(x, a) if self.uses_spatial else None
        return cm, sm

    def channel_branch(self, u: Tensor, cm: Tensor) -> Tensor:
        B, c = cm.shape
        return mul(u, reshape(sigmoid(cm), (B, c, 1, 1)))

    def spatial_branch(self, u: Tensor, sm: Tensor) -> Tensor:
        k1, k2 = build_spatial_kernels(sm)
        gate = sigmoid(spatial_response(u, k1, k2))
        return add(u, mul(gate, u))

    def forward(self, x: Tensor, a: Tensor) -> Tensor:
        cm, sm = self.modulation_params(x, a)
        t = self.topology
        if t == "parallel":
            return add(add(x, self.channel_branch(x, cm)), self.spatial_branch(x, sm))
        if t == "channel_only":
            return add(x, self.channel_branch(x, cm))
        if t == "spatial_only":
            return add(x, self.spatial_branch(x, sm))
        if t == "channel_then_spatial":
            return add(x, self.spatial_branch(self.channel_branch(x, cm), sm))
        return add(x, self.channel_branch(self.spatial_branch(x, sm), cm))


def modulator_param_count(c: int, d_a: int, share_cascade: bool = True,
                          topology: str = "parallel") -> int:
    """Closed-form parameter count of FeatureModulator."""
    d = c // 2

    def cascade(d_out: int) -> int:
        proj = c * d
        stage = d_a * (d * d + d) + (d * d + d)
        expand = d * d_out + d_out
        return proj + 2 * stage + expand

    if topology == "channel_only":
        return cascade(c)
    if topology == "spatial_only":
        return cascade(N_SPATIAL_TAPS)
    if share_cascade:
        return cascade(c + N_SPATIAL_TAPS)
    return cascade(c) + cascade(N_SPATIAL_TAPS)
