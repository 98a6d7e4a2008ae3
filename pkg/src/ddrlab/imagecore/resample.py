"""Separable image resampling with the Keys cubic and triangle kernels.

Grid convention: half-pixel centers, src = (dst + 0.5) / scale - 0.5, with
source indices clamped at the borders. Each output pixel's tap weights are
renormalized to sum to exactly 1.0 so constant images are exact fixed points.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

KEYS_A_DEFAULT = -0.5


def keys_weight(x: float, a: float = KEYS_A_DEFAULT) -> float:
    """Piecewise-cubic interpolation weight at offset ``x``.

    (a+2)|x|^3 - (a+3)|x|^2 + 1 for |x| <= 1,
    a|x|^3 - 5a|x|^2 + 8a|x| - 4a for 1 < |x| < 2, else 0. Even in x.
    """
    ax = abs(float(x))
    if ax <= 1.0:
        return (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0
    if ax < 2.0:
        return a * ax**3 - 5.0 * a * ax**2 + 8.0 * a * ax - 4.0 * a
    return 0.0


def _keys_weights(x: np.ndarray, a: float) -> np.ndarray:
    ax = np.abs(x)
    inner = (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0
    outer = a * ax**3 - 5.0 * a * ax**2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def _triangle_weights(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 1.0 - ax, 0.0)


@lru_cache(maxsize=256)
def resize_matrix(n_in: int, n_out: int, kernel: str = "bicubic") -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix applying 1-D resampling.

    kernel: "bicubic" (4-tap Keys, a=-0.5) or "bilinear" (2-tap triangle).
    Rows sum to exactly 1.0; the returned array is read-only (cached).
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"sizes must be >= 1, got in={n_in} out={n_out}")
    if kernel == "bicubic":
        taps = range(-1, 3)
    elif kernel == "bilinear":
        taps = range(0, 2)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    scale = n_out / n_in
    dst = np.arange(n_out)
    src = (dst + 0.5) / scale - 0.5
    base = np.floor(src).astype(np.int64)

    m = np.zeros((n_out, n_in), dtype=np.float64)
    for t in taps:
        idx = base + t
        if kernel == "bicubic":
            w = _keys_weights(src - idx, KEYS_A_DEFAULT)
        else:
            w = _triangle_weights(src - idx)
        np.add.at(m, (dst, np.clip(idx, 0, n_in - 1)), w)

    m /= m.sum(axis=1, keepdims=True)
    # Nudge the dominant tap so each row sums to exactly 1.0 in float64.
    for r in range(n_out):
        m[r, np.argmax(np.abs(m[r]))] += 1.0 - m[r].sum()
    m.flags.writeable = False
    return m


def resize_tensor(x: np.ndarray, out_h: int, out_w: int, kernel: str = "bicubic") -> np.ndarray:
    """Resample a [n, c, h, w] tensor without clamping the output range."""
    if x.ndim != 4:
        raise ValueError(f"expected rank-4 tensor, got shape {x.shape}")
    mh = resize_matrix(x.shape[2], out_h, kernel)
    mw = resize_matrix(x.shape[3], out_w, kernel)
    return np.einsum("ij,ncjk,lk->ncil", mh, x, mw, optimize=True)


def _check_image(img: np.ndarray) -> None:
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] not in (1, 3):
        raise ValueError(f"expected image tensor [1, c in {{1,3}}, h, w], got {img.shape}")


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Keys 4-tap separable resize of an image, clamped to [0, 1]."""
    _check_image(img)
    return np.clip(resize_tensor(img, out_h, out_w, "bicubic"), 0.0, 1.0)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Triangle 2-tap separable resize of an image, clamped to [0, 1]."""
    _check_image(img)
    return np.clip(resize_tensor(img, out_h, out_w, "bilinear"), 0.0, 1.0)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; inf for identical inputs."""
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
