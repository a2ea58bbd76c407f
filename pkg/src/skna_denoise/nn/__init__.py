"""Minimal reverse-mode layer engine used by the denoiser."""
from .layers import (
    KINDS,
    BatchNorm1d,
    BiLSTM,
    Conv1d,
    ConvTranspose1d,
    Dropout,
    Layer,
    LayerSpec,
    LSTM,
    ReLU,
    ResidualAdd,
    build_layer,
    layer_backward,
    layer_forward,
)
from .optim import AdamState, BalancedBatchSampler, adam_step, balanced_batches, mse_grad, mse_loss

__all__ = [
    "KINDS", "BatchNorm1d", "BiLSTM", "Conv1d", "ConvTranspose1d", "Dropout", "Layer", "LayerSpec",
    "LSTM", "ReLU", "ResidualAdd", "build_layer", "layer_backward", "layer_forward", "AdamState",
    "BalancedBatchSampler", "adam_step", "balanced_batches", "mse_grad", "mse_loss",
]
