"""Small dense-tensor core with tape-based reverse-mode differentiation."""

from . import nn, ops
from .checkpoint import checksum, load_checkpoint, save_checkpoint
from .gradcheck import GradcheckResult, gradcheck
from .kernels import BACKEND
from .optim import Adam, AdamState, adam_step
from .tensor import (
    DEFAULT_DTYPE,
    GradientError,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    no_grad,
)

__all__ = [
    "BACKEND",
    "DEFAULT_DTYPE",
    "Adam",
    "AdamState",
    "GradcheckResult",
    "GradientError",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "checksum",
    "gradcheck",
    "load_checkpoint",
    "nn",
    "no_grad",
    "ops",
    "save_checkpoint",
]
