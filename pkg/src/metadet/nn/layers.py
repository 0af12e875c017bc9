"""Conv2d and Linear module wrappers with fan-in-scaled init."""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .rng import RngStream
from .tensor import Module, Parameter, Tensor


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k, stride=1, padding=0, groups: int = 1,
                 bias: bool = True, rng: RngStream | None = None, dtype=np.float64,
                 zero_init: bool = False):
        super().__init__()
        kh, kw = (k, k) if isinstance(k, int) else k
        cpg = c_in // groups
        shape = (c_out, cpg, kh, kw)
        if zero_init:
            wdata = np.zeros(shape, dtype)
        else:
            std = math.sqrt(2.0 / (cpg * kh * kw))
            wdata = rng.normal(shape, std, dtype)
        self.w = Parameter(wdata, "w")
        self.b = Parameter(np.zeros(c_out, dtype), "b") if bias else None
        self.stride, self.padding, self.groups = stride, padding, groups

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, self.stride, self.padding, self.groups)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True,
                 rng: RngStream | None = None, dtype=np.float64,
                 exact_rows: bool = False, zero_init: bool = False):
        super().__init__()
        if zero_init:
            wdata = np.zeros((d_in, d_out), dtype)
        else:
            wdata = rng.normal((d_in, d_out), math.sqrt(2.0 / d_in), dtype)
        self.w = Parameter(wdata, "w")
        self.b = Parameter(np.zeros(d_out, dtype), "b") if bias else None
        self.exact_rows = exact_rows

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b, exact_rows=self.exact_rows)
