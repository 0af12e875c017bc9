"""Finite-difference verification of reverse-mode gradients.

grad_check perturbs parameter entries one at a time and compares central
differences of a scalar-valued closure against the gradients produced by
backward(). The closure must be deterministic: any dropout or sampling
inside must be re-seeded identically on every call.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream
from .tensor import Parameter, no_grad


def _rel_err(a: float, b: float, atol: float) -> float:
    d = abs(a - b)
    if d <= atol:
        return 0.0
    return d / max(abs(a), abs(b))


def grad_check(f, params: list[Parameter], step: float = 1e-5, tol: float = 1e-6,
               atol: float = 1e-9, max_entries: int | None = None,
               rng: RngStream | None = None) -> dict:
    """Compare backward() gradients of f() against central differences.

    Returns {"ok": bool, "max_rel_err": float, "per_param": {name: err}}.
    When max_entries is set, a deterministic subset of entries per parameter
    is probed (rng defaults to a fixed stream).
    """
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    grads = []
    for p in params:
        if p.grad is None:
            grads.append(np.zeros_like(p.data))
        else:
            grads.append(p.grad.copy())
        p.grad = None

    if rng is None:
        rng = RngStream(1234)
    report: dict[str, float] = {}
    worst = 0.0
    for k, (p, g) in enumerate(zip(params, grads)):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            idxs = rng.permutation(n)[:max_entries]
        else:
            idxs = np.arange(n)
        perr = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                fp = f().item()
            flat[i] = orig - step
            with no_grad():
                fm = f().item()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * step)
            perr = max(perr, _rel_err(float(g.reshape(-1)[i]), fd, atol))
        name = getattr(p, "name", "") or f"param{k}"
        report[name] = perr
        worst = max(worst, perr)
    return {"ok": worst < tol, "max_rel_err": worst, "per_param": report}
