"""Batch normalization with per-layer statistic records.

Each BN layer owns a :class:`BNLayerRecord` holding the stored running
statistics (what the network learned from its training data) next to the
statistics of the most recent batch. The dual-discriminator generator loss
compares the two, so the batch statistics are kept as graph-connected
tensors.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, mean, sqrt

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class BatchSizeError(ShapeError):
    pass


class BNLayerRecord:
    """Learnable affine parameters, stored buffers and last batch statistics.

    ``frozen`` marks a layer whose buffers must never change. A frozen layer
    in training mode still measures batch statistics but normalizes with the
    stored ones, so the network computes the same function as at inference.
    """

    def __init__(self, channel_count: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.channel_count = int(channel_count)
        self.stored_mean = np.zeros(self.channel_count)
        self.stored_var = np.ones(self.channel_count)
        self.scale = Tensor(np.ones(self.channel_count), requires_grad=True)
        self.shift = Tensor(np.zeros(self.channel_count), requires_grad=True)
        self.batch_mean: Tensor | None = None
        self.batch_var: Tensor | None = None
        self.momentum = momentum
        self.eps = eps
        self.frozen = False

    @property
    def fresh(self) -> bool:
        return self.batch_mean is not None

    def reset(self) -> None:
        self.batch_mean = None
        self.batch_var = None

    def __repr__(self) -> str:
        return f"BNLayerRecord(channels={self.channel_count}, frozen={self.frozen})"


def _channel_view(x: Tensor, channels: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if x.ndim == 2:
        axes, bshape = (0,), (1, channels)
    elif x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, channels, 1, 1)
    else:
        raise ShapeError(f"batchnorm expects N x C or N x C x H x W input, got {x.shape}")
    if x.shape[1] != channels:
        raise ShapeError(f"batchnorm: input has {x.shape[1]} channels, record has {channels}")
    return axes, bshape


def _reshape_const(arr: np.ndarray, bshape) -> Tensor:
    return Tensor(arr.reshape(bshape), _check=False)


def batchnorm_forward(x: Tensor, record: BNLayerRecord, training: bool) -> Tensor:
    """Normalize ``x`` per channel and apply the record's scale and shift.

    Training mode measures the batch mean and biased variance, writes them
    into ``record`` and (unless frozen) folds them into the stored buffers
    with an exponential moving average. Inference mode only reads the
    stored buffers.
    """
    c = record.channel_count
    axes, bshape = _channel_view(x, c)
    if training:
        count = x.size // c
        if count < 2:
            raise BatchSizeError(f"batchnorm in training mode needs at least 2 values per "
                                 f"channel, got input of shape {x.shape}")
        mu = mean(x, axes, keepdims=True)
        centered = x - mu
        var = mean(centered * centered, axes, keepdims=True)
        record.batch_mean = mu.reshape(c)
        record.batch_var = var.reshape(c)
        if record.frozen:
            xhat = (x - _reshape_const(record.stored_mean, bshape)) / _reshape_const(
                np.sqrt(record.stored_var + record.eps), bshape)
        else:
            m = record.momentum
            record.stored_mean = (1.0 - m) * record.stored_mean + m * mu.data.reshape(c)
            record.stored_var = (1.0 - m) * record.stored_var + m * var.data.reshape(c)
            xhat = centered / sqrt(var + record.eps)
    else:
        xhat = (x - _reshape_const(record.stored_mean, bshape)) / _reshape_const(
            np.sqrt(record.stored_var + record.eps), bshape)
    return xhat * record.scale.reshape(bshape) + record.shift.reshape(bshape)
