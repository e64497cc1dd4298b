"""Neural-network operators with hand-written backward passes.

Convolutions accept a leading batch axis: ``conv1d`` takes ``(N, C, L)`` and
``conv2d`` takes ``(N, C, H, W)``.  Unbatched inputs (``(C, L)`` and
``(C, H, W)``) are accepted too and return unbatched outputs.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .tensor import Tensor, as_tensor, make_result, mean

SIGMOID_EPS = 1e-7


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _col2im(dcols: np.ndarray, padded_shape, kh, kw, sh, sw, ho, wo) -> np.ndarray:
    """Scatter-add window gradients ``(N, C, Ho, Wo, kh, kw)`` back onto the padded input."""
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    if kh * kw <= ho * wo:
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += dcols[:, :, :, :, i, j]
    else:
        for a in range(ho):
            for b in range(wo):
                dxp[:, :, a * sh:a * sh + kh, b * sw:b * sw + kw] += dcols[:, :, a, b]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride=1, pad=0, groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation with zero padding.

    ``w`` has shape ``(C_out, C_in // groups, Kh, Kw)``; ``groups == C_in``
    gives a depthwise convolution.
    """
    x = as_tensor(x)
    unbatched = x.ndim == 3
    if unbatched:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects x (N,C,H,W) and w (Co,Ci,Kh,Kw); got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    co, cg, kh, kw = w.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    if c % groups or co % groups:
        raise ShapeError(f"channels ({c} in, {co} out) not divisible by groups={groups}")
    if cg != c // groups:
        raise ShapeError(f"weight expects {cg * groups} input channels, input has {c}")
    if b is not None and b.shape != (co,):
        raise ShapeError(f"bias shape {b.shape} != ({co},)")
    if h + 2 * ph < kh or wd + 2 * pw < kw:
        raise ShapeError(f"input {h}x{wd} (pad {ph},{pw}) smaller than kernel {kh}x{kw}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    cog = co // groups
    m = n * ho * wo

    if groups == c == co and groups > 1:
        return _depthwise(x, w, b, sh, sw, ph, pw, ho, wo, unbatched)

    pointwise = kh == kw == 1 and sh == sw == 1 and ph == pw == 0 and groups == 1
    if pointwise:
        cols = x.data.transpose(0, 2, 3, 1).reshape(1, m, c)
        padded_shape = None
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
        padded_shape = xp.shape
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
        cols = (win.reshape(n, groups, cg, ho, wo, kh, kw)
                .transpose(1, 0, 3, 4, 2, 5, 6)
                .reshape(groups, m, cg * kh * kw))
    wm = w.data.reshape(groups, cog, cg * kh * kw).transpose(0, 2, 1)
    out = np.matmul(cols, wm)
    out = out.reshape(groups, n, ho, wo, cog).transpose(1, 0, 4, 2, 3).reshape(n, co, ho, wo)
    if b is not None:
        out = out + b.data.reshape(1, co, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gm = g.reshape(n, groups, cog, ho, wo).transpose(1, 0, 3, 4, 2).reshape(groups, m, cog)
        dw = np.matmul(cols.transpose(0, 2, 1), gm).transpose(0, 2, 1).reshape(w.shape)
        dx = None
        if x.requires_grad:
            dcols = np.matmul(gm, wm.transpose(0, 2, 1))
            if pointwise:
                dx = dcols.reshape(n, h, wd, c).transpose(0, 3, 1, 2)
            else:
                dcols = (dcols.reshape(groups, n, ho, wo, cg, kh, kw)
                         .transpose(1, 0, 4, 2, 3, 5, 6)
                         .reshape(n, c, ho, wo, kh, kw))
                dxp = _col2im(dcols, padded_shape, kh, kw, sh, sw, ho, wo)
                dx = dxp[:, :, ph:ph + h, pw:pw + wd]
            dx = np.ascontiguousarray(dx)
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    res = make_result(out, parents, bw)
    if unbatched:
        res = res.reshape(res.shape[1:])
    return res


def _depthwise(x, w, b, sh, sw, ph, pw, ho, wo, unbatched):
    n, c, h, wd = x.shape
    kh, kw = w.shape[2:]
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    wk = w.data[:, 0]

    def window(arr, i, j):
        return arr[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw]

    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += window(xp, i, j) * wk[:, i, j].reshape(1, c, 1, 1)
    if b is not None:
        out += b.data.reshape(1, c, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        dw = np.empty_like(w.data)
        for i in range(kh):
            for j in range(kw):
                dw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, window(xp, i, j))
        dx = None
        if x.requires_grad:
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    window(dxp, i, j)[...] += g * wk[:, i, j].reshape(1, c, 1, 1)
            dx = np.ascontiguousarray(dxp[:, :, ph:ph + h, pw:pw + wd])
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    res = make_result(out, parents, bw)
    if unbatched:
        res = res.reshape(res.shape[1:])
    return res


def conv1d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """1-D cross-correlation: ``x`` ``(N, C_in, L)``, ``w`` ``(C_out, C_in, K)``."""
    x = as_tensor(x)
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d expects x (N,C,L) and w (Co,Ci,K); got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    if x.shape[2] + 2 * pad < w.shape[2]:
        raise ShapeError(f"conv1d: length {x.shape[2]} + 2*{pad} shorter than kernel {w.shape[2]}")
    n, c, length = x.shape
    x4 = x.reshape(n, c, 1, length)
    w4 = w.reshape(w.shape[0], w.shape[1], 1, w.shape[2])
    out = conv2d(x4, w4, b, stride=(1, stride), pad=(0, pad))
    out = out.reshape(out.shape[0], out.shape[1], out.shape[3])
    if unbatched:
        out = out.reshape(out.shape[1:])
    return out


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w.T + b`` for ``x`` of shape ``(N, F_in)`` and ``w`` of shape ``(F_out, F_in)``."""
    x = as_tensor(x)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: incompatible shapes x{x.shape}, w{w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias shape {b.shape} != ({w.shape[0]},)")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        grads = [g @ w.data if x.requires_grad else None, g.T @ x.data]
        if b is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return make_result(out, parents, bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor, eps: float = SIGMOID_EPS) -> Tensor:
    """Logistic function with the output clamped to ``[eps, 1 - eps]``."""
    z = x.data
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    lo, hi = x.dtype.type(eps), x.dtype.type(1.0) - x.dtype.type(eps)
    out = np.clip(s, lo, hi)
    active = (s >= lo) & (s <= hi)
    return make_result(out, (x,), lambda g: (g * s * (1 - s) * active,))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor, running_var: Tensor,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalize over every axis except axis 1 (channels).

    Training mode uses batch statistics and updates the running buffers in
    place; eval mode uses the running buffers.
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({c},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    g_ = gamma.data.reshape(bshape)
    if training:
        count = x.data.size // c
        mu = x.data.mean(axis=axes, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        unbiased = var * (count / max(count - 1, 1))
        running_mean.data = ((1 - momentum) * running_mean.data + momentum * mu.reshape(c)).astype(running_mean.dtype)
        running_var.data = ((1 - momentum) * running_var.data + momentum * unbiased.reshape(c)).astype(running_var.dtype)

        def bw(g):
            dxhat = g * g_
            dx = inv * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv = (1.0 / np.sqrt(running_var.data + eps)).reshape(bshape).astype(x.dtype)
        xhat = (x.data - running_mean.data.reshape(bshape).astype(x.dtype)) * inv

        def bw(g):
            return g * g_ * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (xhat * g_ + beta.data.reshape(bshape)).astype(x.dtype)
    return make_result(out, (x, gamma, beta), bw)


def layer_norm(x: Tensor, axis: int, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize over a single axis; ``gamma``/``beta`` are shaped like that axis."""
    axis = axis % x.ndim
    bshape = [1] * x.ndim
    bshape[axis] = x.shape[axis]
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    other = tuple(i for i in range(x.ndim) if i != axis)
    g_ = gamma.data.reshape(bshape) if gamma is not None else None
    out = xhat
    if gamma is not None:
        out = out * g_
    if beta is not None:
        out = out + beta.data.reshape(bshape)
    parents = [x]
    if gamma is not None:
        parents.append(gamma)
    if beta is not None:
        parents.append(beta)

    def bw(g):
        dxhat = g * g_ if gamma is not None else g
        dx = inv * (dxhat - dxhat.mean(axis=axis, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True))
        grads = [dx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=other))
        if beta is not None:
            grads.append(g.sum(axis=other))
        return tuple(grads)

    return make_result(out.astype(x.dtype), tuple(parents), bw)


def global_avg_pool(x: Tensor, axes=(2, 3)) -> Tensor:
    return mean(x, axis=tuple(axes))
