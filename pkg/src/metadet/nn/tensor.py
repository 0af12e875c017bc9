"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus an optional backward closure and the
parents it was computed from. Calling backward() on a scalar walks the
graph in reverse topological order and accumulates gradients into .grad.

Ops never mutate their inputs; every forward produces a fresh array.
Parameters are the only tensors written in place, and only by the
optimizer (or by tests poking at initialization).

Forward results are checked for NaN/Inf while strict_finite() is enabled
(the default): silent non-finite values are treated as a bug, not a state.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import NumericsError, ShapeError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_finite_checks = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (pure forward)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def set_strict_finite(on: bool) -> bool:
    """Toggle NaN/Inf checking of op outputs. Returns the previous setting."""
    global _finite_checks
    prev = _finite_checks
    _finite_checks = bool(on)
    return prev


def strict_finite() -> bool:
    return _finite_checks


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents, backward, op: str = "op") -> "Tensor":
        """Wrap an op result, attaching the graph edge when grads are on."""
        if _finite_checks and not np.all(np.isfinite(data)):
            raise NumericsError(f"non-finite values produced by {op}")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._parents = ()
        out._backward = None
        out.requires_grad = False
        if _grad_enabled:
            live = tuple(p for p in parents if isinstance(p, Tensor) and p.requires_grad)
            if live:
                out.requires_grad = True
                out._parents = live
                out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    # -- conveniences -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad})"

    # Arithmetic sugar is provided by ops (registered below to avoid an
    # import cycle; see ops.py).


class Parameter(Tensor):
    """A trainable leaf tensor with a name used in checkpoints and reports."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape}, dtype={self.data.dtype})"


class Module:
    """Minimal container: tracks parameters, submodules and train/eval mode."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def modules(self):
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Module):
                out.append(v)
            elif isinstance(v, (list, tuple)):
                out.extend(m for m in v if isinstance(m, Module))
        return out

    def named_parameters(self, prefix: str = "", _seen=None):
        # Shared submodules are listed once, under their first name.
        seen = _seen if _seen is not None else set()
        pairs: list[tuple[str, Parameter]] = []
        for key, v in self.__dict__.items():
            items = []
            if isinstance(v, (Parameter, Module)):
                items = [(key, v)]
            elif isinstance(v, (list, tuple)):
                items = [(f"{key}.{i}", m) for i, m in enumerate(v)
                         if isinstance(m, (Parameter, Module))]
            for name, item in items:
                if id(item) in seen:
                    continue
                seen.add(id(item))
                full = f"{prefix}{name}"
                if isinstance(item, Parameter):
                    pairs.append((full, item))
                else:
                    pairs.extend(item.named_parameters(full + ".", seen))
        return pairs

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True):
        self.training = mode
        for m in self.modules():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()
