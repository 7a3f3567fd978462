"""Dense tensors, a gradient tape, and optimizers."""

from . import ops
from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .ops import EmptyTargetsWarning
from .optim import AdamW, Adagrad, NonFiniteGradientError, adagrad_step, adamw_step, clip_grad_norm
from .tensor import GradientTape, ShapeError, Tensor, as_tensor, count_macs

__all__ = [
    "ops", "Tensor", "GradientTape", "ShapeError", "as_tensor", "count_macs",
    "AdamW", "Adagrad", "adamw_step", "adagrad_step", "clip_grad_norm", "NonFiniteGradientError",
    "EmptyTargetsWarning", "save_checkpoint", "load_checkpoint", "config_hash",
]
