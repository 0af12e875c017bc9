"""Learnable edge enhancement with decomposed second-difference kernels.

Each channel owns a vertical and a horizontal 3-tap filter, both initialized
to [1, -2, 1]/4. The vertical pass is gated by sigmoid(alpha) after a ReLU,
the horizontal pass follows, and the result is instance-normalized per
sample and channel, scaled by a per-channel gamma and added back to the
input. At init (alpha = 0, gamma = 1) the composed linear path equals a
single 3x3 conv with the separable second-difference matrix
(1/16)[[1,-2,1],[-2,4,-2],[1,-2,1]].
"""

from __future__ import annotations

import numpy as np

from .nn import (Module, Parameter, Tensor, add, div, dwconv_h, dwconv_v,
                 mean, mul, relu, reshape, sigmoid, sqrt, sub)

INIT_TAPS = (0.25, -0.5, 0.25)
EPS = 1e-5


def second_difference_taps(c: int, dtype=np.float64) -> np.ndarray:
    """(C,3) array of [1,-2,1]/4 rows (exact binary fractions)."""
    return np.tile(np.array(INIT_TAPS, dtype=dtype), (c, 1))


def compose_kernel(w_v: np.ndarray, w_h: np.ndarray) -> np.ndarray:
    """Per-channel outer product of the two tap vectors: (C,3,3).

    This is the single 2D kernel the two 1D passes multiply out to when the
    gate is dropped from the path.
    """
    return w_v[:, :, None] * w_h[:, None, :]


def instance_norm_residual(x: Tensor, branch: Tensor, gamma: Tensor, eps: float = EPS) -> Tensor:
    """x + gamma * (branch - mean) / sqrt(var + eps).

    Mean and biased variance are taken over the spatial extent of each
    (sample, channel) slice independently.
    """
    mu = mean(branch, axis=(2, 3), keepdims=True)
    d = sub(branch, mu)
    var = mean(mul(d, d), axis=(2, 3), keepdims=True)
    norm = div(d, sqrt(add(var, Tensor(np.asarray(eps, branch.dtype)))))
    c = gamma.shape[0]
    return add(x, mul(reshape(gamma, (1, c, 1, 1)), norm))


class EdgeEnhancer(Module):
    """Depthwise decomposed edge branch with a normalized residual."""

    def __init__(self, c: int, dtype=np.float64):
        super().__init__()
        self.c = c
        self.w_v = Parameter(second_difference_taps(c, dtype), "w_v")
        self.w_h = Parameter(second_difference_taps(c, dtype), "w_h")
        self.alpha = Parameter(np.zeros((), dtype), "alpha")
        self.gamma = Parameter(np.ones(c, dtype), "gamma")

    def edge_chain(self, x: Tensor) -> Tensor:
        """Gated vertical pass then horizontal pass (pre-normalization)."""
        xv = mul(sigmoid(self.alpha), relu(dwconv_v(x, self.w_v)))
        return dwconv_h(xv, self.w_h)

    def forward(self, x: Tensor) -> Tensor:
        return instance_norm_residual(x, self.edge_chain(x), self.gamma)

    def composed_kernel(self) -> np.ndarray:
        return compose_kernel(self.w_v.data, self.w_h.data)


def enhancer_param_count(c: int) -> int:
    """Closed form: two tap sets, one gamma per channel, one gate scalar."""
    return 2 * 3 * c + c + 1
