"""Bilinear resampling built from explicit interpolation matrices.

Every resolution change in the toolkit goes through these helpers so that
resampling is a single, exactly linear operator (out = W_r @ a @ W_c.T) with
half-pixel source centers and edge clamping.
"""

from __future__ import annotations

import numpy as np


def interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Return the (n_out, n_in) bilinear interpolation matrix.

    Row i holds the weights of the input samples contributing to output
    sample i under the half-pixel-center convention:
        src = (i + 0.5) * n_in / n_out - 0.5,  clamped to [0, n_in - 1].
    For n_out == n_in this is exactly the identity.
    """
    if n_out < 1 or n_in < 1:
        raise ValueError("sizes must be >= 1")
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        w[i, lo] += 1.0 - frac
        w[i, hi] += frac
    return w


def resize2d(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resize a 2-D array to (out_h, out_w)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {a.shape}")
    if a.shape == (out_h, out_w):
        return a.copy()
    wy = interp_matrix(out_h, a.shape[0])
    wx = interp_matrix(out_w, a.shape[1])
    return wy @ a @ wx.T


def resize_hwc(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resize an (H, W, C) array over its spatial axes."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"expected 3-D array, got shape {a.shape}")
    if a.shape[:2] == (out_h, out_w):
        return a.copy()
    wy = interp_matrix(out_h, a.shape[0])
    wx = interp_matrix(out_w, a.shape[1])
    out = np.tensordot(wy, a, axes=(1, 0))          # (out_h, W, C)
    out = np.tensordot(wx, out, axes=(1, 1))        # (out_w, out_h, C)
    return np.transpose(out, (1, 0, 2))


def resize_pairwise(a: np.ndarray, in_hw: tuple[int, int], out_n: int) -> np.ndarray:
    """Resize an (N, N) pixel-pair matrix to (out_n**2, out_n**2).

    The matrix is viewed as a 4-D field over (row pixel grid) x (column pixel
    grid), with N == h * w from ``in_hw``, and both grids are bilinearly
    resampled to out_n x out_n.
    """
    h, w = in_hw
    a = np.asarray(a, dtype=np.float64)
    n = h * w
    if a.shape != (n, n):
        raise ValueError(f"expected ({n}, {n}) matrix for grid {in_hw}, got {a.shape}")
    if h == out_n and w == out_n:
        return a.copy()
    a4 = a.reshape(h, w, h, w)
    wy = interp_matrix(out_n, h)
    wx = interp_matrix(out_n, w)
    out = np.tensordot(wy, a4, axes=(1, 0))         # (R, w, h, w)
    out = np.tensordot(wx, out, axes=(1, 1))        # (R, R, h, w)  axes now (col0? ...)
    out = np.transpose(out, (1, 0, 2, 3))           # (R, R, h, w)
    out = np.tensordot(wy, out, axes=(1, 2))        # (R, R, R, w)
    out = np.transpose(out, (1, 2, 0, 3))
    out = np.tensordot(wx, out, axes=(1, 3))        # (R, R, R, R)
    out = np.transpose(out, (1, 2, 3, 0))
    return out.reshape(out_n * out_n, out_n * out_n)


def minmax_normalize(a: np.ndarray) -> np.ndarray:
    """Map an array affinely onto [0, 1]; constant arrays map to all zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo = float(a.min())
    hi = float(a.max())
    if hi <= lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)
