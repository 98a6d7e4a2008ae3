"""Tiny reverse-mode autodiff over a conv-net op set, the SR/classifier/critic
architectures built on it, their training loops, and checkpoint I/O.

Parameters live as float32 arrays (the checkpoint storage type); all graph
math runs in float64 with a fixed accumulation order, so training runs are
bit-reproducible for a given seed and config.
"""

from . import autodiff
from .models import ArchSpec, Model, build, forward
from .checkpoint import CheckpointError, save_checkpoint, load_checkpoint
from .training import (
    AdamState,
    NonFiniteLossError,
    TrainConfig,
    train_step_mse,
    train_step_gan,
    disc_step,
    train_sr,
    train_classifier,
)
from .gradcheck import grad_check, analytic_grads

__all__ = [
    "autodiff",
    "ArchSpec",
    "Model",
    "build",
    "forward",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "AdamState",
    "NonFiniteLossError",
    "TrainConfig",
    "train_step_mse",
    "train_step_gan",
    "disc_step",
    "train_sr",
    "train_classifier",
    "grad_check",
    "analytic_grads",
]
