"""Dense tensor engine: autodiff, ops, RNG, optimizer, serialization.

Convolutions run on a compiled core when the extension built, with a pure
numpy fallback selected at import time (see backend.py). Everything else is
numpy throughout.
"""

from . import ops
from .backend import available_backends, backend_name, set_backend
from .gradcheck import grad_check
from .layers import Conv2d, Linear
from .ops import *  # noqa: F401,F403
from .optim import SGD, warmup_lr
from .rng import RngStream
from .serialize import (load_checkpoint, load_tensor, read_tensor,
                        save_checkpoint, save_tensor, tensor_bytes)
from .tensor import (Module, Parameter, Tensor, grad_enabled, no_grad,
                     set_strict_finite, strict_finite)

__all__ = ["Tensor", "Parameter", "Module", "RngStream", "SGD", "warmup_lr",
           "Conv2d", "Linear",
           "no_grad", "grad_enabled", "set_strict_finite", "strict_finite",
           "grad_check", "backend_name", "set_backend", "available_backends",
           "save_tensor", "load_tensor", "tensor_bytes", "read_tensor",
           "save_checkpoint", "load_checkpoint"] + list(ops.__all__)
