"""SGD with momentum / weight decay, and Adam."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


def sgd_step(param: np.ndarray, grad: np.ndarray, buf: np.ndarray, lr: float,
             momentum: float = 0.0, weight_decay: float = 0.0) -> None:
    """In-place SGD update of ``param`` and its velocity ``buf``."""
    if param.shape != grad.shape or param.shape != buf.shape:
        raise ShapeError(f"sgd_step: shapes {param.shape}, {grad.shape}, {buf.shape} differ")
    d = grad + weight_decay * param if weight_decay else grad
    buf *= momentum
    buf += d
    param -= lr * buf


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, t: int,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update; ``t`` is the 1-based step count."""
    if param.shape != grad.shape or param.shape != m.shape or param.shape != v.shape:
        raise ShapeError(f"adam_step: shapes {param.shape} and {grad.shape} differ")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class SGD:
    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, buf in zip(self.params, self.buffers):
            if p.grad is None:
                continue
            sgd_step(p.data, p.grad, buf, self.lr, self.momentum, self.weight_decay)


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, m, v, self.t, self.lr, self.beta1, self.beta2, self.eps)
