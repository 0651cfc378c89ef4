"""Central finite differences, used to check the analytic backward pass."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, no_grad


def finite_difference_gradient(f: Callable[[Tensor], Tensor], x: Tensor,
                               h: float = 1e-5) -> Tensor:
    """Estimate df/dx elementwise as (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    base = x.data.astype(np.float64, copy=True)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = f(Tensor(base)).item()
            flat[i] = orig - h
            minus = f(Tensor(base)).item()
            flat[i] = orig
            grad[i] = (plus - minus) / (2.0 * h)
    return Tensor(grad.reshape(x.shape))


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest elementwise |a - b| / max(|a|, |b|, 1e-8)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
