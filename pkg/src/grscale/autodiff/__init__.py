"""Minimal reverse-mode autodiff used by every trainable component."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numeric_grad, relative_error
from .optim import AdamState, AdamW, NonFiniteGradient, adamw_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    default_dtype,
    div,
    dropout,
    embedding_lookup,
    exp,
    gelu,
    huber,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    precision,
    relu,
    reshape,
    scaled_dot_attention,
    sigmoid,
    slice_,
    softmax,
    stop_gradient,
    sub,
    sum_,
    transpose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
