"""Convolution kernel backend: compiled extension with a numpy fallback.

The compiled `_fastconv` module is used when it imported cleanly, unless
the DECLICK_PURE_PYTHON environment variable is set to a non-empty value.
`benchmarks/bench_kernels.py` compares the two.
"""
from __future__ import annotations

import os

import numpy as np

if os.environ.get("DECLICK_PURE_PYTHON"):
    _fast = None
else:
    try:
        from . import _fastconv as _fast
    except ImportError:
        _fast = None

HAVE_FAST = _fast is not None
BACKEND = "compiled" if HAVE_FAST else "python"


def _pad1(x: np.ndarray) -> np.ndarray:
    n, c, length = x.shape
    xp = np.empty((n, c, length + 2), dtype=x.dtype)
    xp[:, :, 0] = 0.0
    xp[:, :, -1] = 0.0
    xp[:, :, 1:-1] = x
    return xp


def _im2col(xp: np.ndarray, length: int) -> np.ndarray:
    # (N, Ci, L+2) -> (N*L, Ci*3), k-major within a channel
    win = np.lib.stride_tricks.sliding_window_view(xp, 3, axis=2)
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
        xp.shape[0] * length, xp.shape[1] * 3)


def conv3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-length conv, kernel 3, stride 1, zero padding.

    x: (N, Ci, L); w: (Co, Ci, 3); b: (Co,) -> (N, Co, L)
    """
    n, ci, length = x.shape
    co = w.shape[0]
    if _fast is not None:
        y = np.empty((n, co, length), dtype=x.dtype)
        _fast.conv3_fwd(_pad1(x), np.ascontiguousarray(w),
                        np.ascontiguousarray(b), y)
        return y
    cols = _im2col(_pad1(x), length)
    y = cols @ w.reshape(co, ci * 3).T + b
    return y.reshape(n, length, co).transpose(0, 2, 1)


def conv3_backward(x: np.ndarray, w: np.ndarray,
                   gy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv3_forward; returns (gx, gw, gb)."""
    n, ci, length = x.shape
    co = w.shape[0]
    gy = np.ascontiguousarray(gy)
    gb = gy.sum(axis=(0, 2))
    if _fast is not None:
        # input gradient is the same conv with flipped, transposed weights
        w_t = np.ascontiguousarray(w[:, :, ::-1].transpose(1, 0, 2))
        gx = np.empty_like(x)
        _fast.conv3_fwd(_pad1(gy), w_t, np.zeros(ci, dtype=x.dtype), gx)
        gw = np.zeros_like(w)
        _fast.conv3_gw(_pad1(x), gy, gw)
        return gx, gw, gb
    cols_g = _im2col(_pad1(gy), length)
    w_t = w[:, :, ::-1].transpose(1, 0, 2).reshape(ci, co * 3)
    gx = (cols_g @ w_t.T).reshape(n, length, ci).transpose(0, 2, 1)
    cols_x = _im2col(_pad1(x), length)
    gy_flat = gy.transpose(0, 2, 1).reshape(n * length, co)
    gw = (gy_flat.T @ cols_x).reshape(co, ci, 3)
    return np.ascontiguousarray(gx), gw, gb
