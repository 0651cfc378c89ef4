"""Spatial operations: convolution, transposed convolution, upsampling, pooling.

Convolutions unfold the input into patch columns with one strided slice per
kernel offset, then contract with a single matmul. The backward passes fold
columns back with the same loop.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, as_tensor, make_op


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def deconv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, padded_shape, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    n, c = padded_shape[:2]
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return out


def _unpad(x: np.ndarray, p: int) -> np.ndarray:
    return x[:, :, p:x.shape[2] - p, p:x.shape[3] - p] if p else x


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``x`` is N x C x H x W, ``weight`` is O x C x kh x kw."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    s, p = int(stride), int(padding)
    ho, wo = conv_output_size(h, kh, s, p), conv_output_size(w, kw, s, p)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {weight.shape} does not fit input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = _im2col(xp, kh, kw, s, ho, wo)
    wm = weight.data.reshape(o, -1)
    out = np.matmul(wm, cols).reshape(n, o, ho, wo)
    parents = [x, weight]
    if bias is not None:
        if bias.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {o} filters")
        out = out + bias.data.reshape(1, o, 1, 1)
        parents.append(bias)

    def back(g):
        g2 = g.reshape(n, o, ho * wo)
        gw = np.einsum("nol,nkl->ok", g2, cols).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wm.T, g2)
            gx = _unpad(_col2im(gcols, xp.shape, kh, kw, s, ho, wo), p)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_op(out, parents, back, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution. ``weight`` is C_in x C_out x kh x kw."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose2d: incompatible shapes {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    _, cout, kh, kw = weight.shape
    s, p = int(stride), int(padding)
    ho, wo = deconv_output_size(h, kh, s, p), deconv_output_size(w, kw, s, p)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: output would be empty for {x.shape}")
    padded_shape = (n, cout, ho + 2 * p, wo + 2 * p)
    wm = weight.data.reshape(cin, -1)
    xm = x.data.reshape(n, cin, h * w)
    cols = np.matmul(wm.T, xm)
    out = _unpad(_col2im(cols, padded_shape, kh, kw, s, h, w), p)
    parents = [x, weight]
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} does not match {cout}")
        out = out + bias.data.reshape(1, cout, 1, 1)
        parents.append(bias)

    def back(g):
        gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = _im2col(gp, kh, kw, s, h, w)
        gw = np.einsum("ncl,nkl->ck", xm, gcols).reshape(weight.shape)
        gx = np.matmul(wm, gcols).reshape(x.shape) if x.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_op(out, parents, back, "conv_transpose2d")


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"upsample expects N x C x H x W, got {x.shape}")
    f = int(factor)
    out = x.data.repeat(f, axis=2).repeat(f, axis=3)
    n, c, h, w = x.shape

    def back(g):
        return (g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)),)

    return make_op(out, (x,), back, "upsample")


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects N x C x H x W, got {x.shape}")
    return x.mean(axis=(2, 3))
