"""Minimal numpy tensor ops with manual backprop, the encoder/decoder and
transition models, their two-phase training, and checkpoint I/O."""

from .ops import (
    AdamState,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    leaky_relu,
    linear_forward,
    maxpool_forward,
    mse_loss,
    relu,
    sigmoid,
    unpool,
)
from .models import (
    EMBEDDING_DIM,
    HISTORY_LEN,
    decode,
    encode,
    generate_next_image,
    init_autoencoder,
    init_transition,
    transition_forward,
)
from .train import TrainConfig, train_autoencoder, train_transition
from .checkpoint import CorruptCheckpoint, VersionMismatch, load_params, save_params

__all__ = [
    "AdamState", "adam_step", "conv2d_backward", "conv2d_forward",
    "deconv2d_backward", "deconv2d_forward", "leaky_relu", "linear_forward",
    "maxpool_forward", "mse_loss", "relu", "sigmoid", "unpool",
    "EMBEDDING_DIM", "HISTORY_LEN", "decode", "encode", "generate_next_image",
    "init_autoencoder", "init_transition", "transition_forward",
    "TrainConfig", "train_autoencoder", "train_transition",
    "CorruptCheckpoint", "VersionMismatch", "load_params", "save_params",
]
