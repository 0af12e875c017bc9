"""Momentum SGD and the linear warmup schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class SGD:
    """Classic momentum: v <- m*v + g; p <- p - lr*v. Grads are zeroed by step()."""

    def __init__(self, params: list[Parameter], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def warmup_lr(iteration: int, total_iters: int, base_lr: float, warmup_frac: float = 0.05) -> float:
    """Linear ramp from base_lr/warmup to base_lr, then constant."""
    warmup = max(1, int(round(total_iters * warmup_frac)))
    if iteration < warmup:
        return base_lr * (iteration + 1) / warmup
    return base_lr
