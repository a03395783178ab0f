"""Losses returning ``(value, gradient)`` with respect to the prediction."""

from __future__ import annotations

import numpy as np

from ..maps import gaussian_window

__all__ = ["loss_ssim", "loss_l1", "loss_generator", "loss_mse", "DEFAULT_ALPHA"]

# weighting between the SSIM and L1 terms
DEFAULT_ALPHA = 0.84

_C1 = 0.01**2
_C2 = 0.03**2


def _filt1(x, k, axis):
    r = len(k) // 2
    n = x.shape[axis]
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x, pad, mode="edge")
    out = np.zeros_like(x)
    for j, kj in enumerate(k):
        out += kj * np.take(xp, np.arange(j, j + n), axis=axis)
    return out


def _filt1_adjoint(g, k, axis):
    r = len(k) // 2
    n = g.shape[axis]
    shape = list(g.shape)
    shape[axis] = n + 2 * r
    gp = np.zeros(shape, dtype=g.dtype)
    for j, kj in enumerate(k):
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(j, j + n)
        gp[tuple(idx)] += kj * g
    # fold the replicated border back onto the edge samples
    out = np.take(gp, np.arange(r, r + n), axis=axis).copy()
    lo = [slice(None)] * g.ndim
    hi = [slice(None)] * g.ndim
    lo[axis] = slice(0, 1)
    hi[axis] = slice(n - 1, n)
    out[tuple(lo)] += np.take(gp, np.arange(0, r), axis=axis).sum(axis=axis, keepdims=True)
    out[tuple(hi)] += np.take(gp, np.arange(n + r, n + 2 * r), axis=axis).sum(axis=axis, keepdims=True)
    return out


def _blur(x, k):
    return _filt1(_filt1(x, k, -2), k, -1)


def _blur_adjoint(g, k):
    return _filt1_adjoint(_filt1_adjoint(g, k, -1), k, -2)


def _check(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def loss_ssim(pred, target, window=11, sigma=1.5):
    """``1 - mean SSIM(target, pred)`` over the last two axes, constants on [0, 1]."""
    x, y = _check(pred, target)
    k = gaussian_window(window, sigma).astype(x.dtype)
    mx, my = _blur(x, k), _blur(y, k)
    exx, eyy, exy = _blur(x * x, k), _blur(y * y, k), _blur(x * y, k)
    sxx, syy, sxy = exx - mx * mx, eyy - my * my, exy - mx * my
    a1, b1 = 2 * mx * my + _C1, mx * mx + my * my + _C1
    a2, b2 = 2 * sxy + _C2, sxx + syy + _C2
    s = a1 * a2 / (b1 * b2)
    value = 1.0 - float(s.mean())

    scale = -1.0 / s.size
    # partials of s with respect to blur(x), blur(x*x), blur(x*y)
    d_mx = (a2 / b2) * (2 * my * b1 - 2 * mx * a1) / b1**2 \
        + (a1 / b1) * (-2 * my * b2 + 2 * mx * a2) / b2**2
    d_exx = -s / b2
    d_exy = 2 * a1 / (b1 * b2)
    grad = _blur_adjoint(d_mx * scale, k) + 2 * x * _blur_adjoint(d_exx * scale, k) \
        + y * _blur_adjoint(d_exy * scale, k)
    return value, grad.astype(x.dtype)


def loss_l1(pred, target):
    x, y = _check(pred, target)
    return float(np.abs(x - y).mean()), (np.sign(x - y) / x.size).astype(x.dtype)


def loss_generator(pred, target, alpha=DEFAULT_ALPHA):
    """``alpha * loss_ssim + (1 - alpha) * loss_l1``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    v1, g1 = loss_ssim(pred, target)
    v2, g2 = loss_l1(pred, target)
    return alpha * v1 + (1 - alpha) * v2, alpha * g1 + (1 - alpha) * g2


def loss_mse(pred, target):
    x, y = _check(pred, target)
    d = x - y
    return float((d * d).mean()), (2 * d / x.size).astype(x.dtype)
