"""Reverse-mode autodiff on numpy arrays.

Each op returns a Var recording its parents and a vjp closure mapping the
output gradient to parent gradients. Inside no_grad() the tape is dropped, so
inference keeps no intermediate buffers alive.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..imagecore.resample import resize_matrix


class _State:
    enabled = True


@contextmanager
def no_grad():
    prev = _State.enabled
    _State.enabled = False
    try:
        yield
    finally:
        _State.enabled = prev


class Var:
    """A value node; leaves have no parents and no vjp."""

    __slots__ = ("value", "grad", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        if _State.enabled:
            self.parents = parents
            self.vjp = vjp
        else:
            self.parents = ()
            self.vjp = None


def _topo(root: Var) -> list[Var]:
    order: list[Var] = []
    state: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        st = state.get(id(node), 0)
        if st == 0:
            state[id(node)] = 1
            for p in node.parents:
                if state.get(id(p), 0) == 0:
                    stack.append(p)
        elif st == 1:
            state[id(node)] = 2
            order.append(node)
            stack.pop()
        else:
            stack.pop()
    return order


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every ancestor's .grad."""
    if root.value.ndim != 0:
        raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
    order = _topo(root)
    root.grad = np.float64(1.0)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------- basic ops


def add(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    y = a.value + b.value
    if not _State.enabled:
        return Var(y)
    return Var(y, (a, b), lambda g: (g, g))


def neg(a: Var) -> Var:
    y = -a.value
    if not _State.enabled:
        return Var(y)
    return Var(y, (a,), lambda g: (-g,))


def scale(a: Var, c: float) -> Var:
    y = a.value * c
    if not _State.enabled:
        return Var(y)
    return Var(y, (a,), lambda g: (g * c,))


def leaky_relu(a: Var, slope: float = 0.1) -> Var:
    mask = a.value > 0.0
    y = np.where(mask, a.value, slope * a.value)
    if not _State.enabled:
        return Var(y)
    return Var(y, (a,), lambda g: (g * np.where(mask, 1.0, slope),))


def softplus(a: Var) -> Var:
    x = a.value
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        sig = 1.0 / (1.0 + np.exp(-x))
        return (g * sig,)

    return Var(y, (a,), vjp)


def mean_all(a: Var) -> Var:
    y = a.value.mean()
    if not _State.enabled:
        return Var(y)
    inv = 1.0 / a.value.size
    return Var(y, (a,), lambda g: (np.full_like(a.value, g * inv),))


def global_mean(a: Var) -> Var:
    """[n, c, h, w] -> [n, c] spatial mean."""
    n, c, h, w = a.value.shape
    y = a.value.mean(axis=(2, 3))
    if not _State.enabled:
        return Var(y)
    inv = 1.0 / (h * w)
    return Var(y, (a,), lambda g: (np.broadcast_to((g * inv)[:, :, None, None], a.value.shape).copy(),))


def detach(a: Var) -> Var:
    return Var(a.value)


# ----------------------------------------------------------- structured ops


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(n, c, H, W) padded input -> (n*oh*ow, c*kh*kw) patch matrix."""
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    if stride != 1:
        windows = windows[:, :, ::stride, ::stride]
    n, c, oh, ow, _, _ = windows.shape
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def conv2d(x: Var, w: Var, b: Var, stride: int = 1) -> Var:
    """Same-padded 2-D convolution (odd kernels), optional stride."""
    xv, wv, bv = x.value, w.value, b.value
    n, cin, h, win = xv.shape
    cout, cin_w, kh, kw = wv.shape
    if cin_w != cin:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d requires odd kernel sizes")
    ph, pw = kh // 2, kw // 2
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (win + 2 * pw - kw) // stride + 1

    xp = np.pad(xv, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw, stride)
    wm = wv.reshape(cout, cin * kh * kw)
    y = (cols @ wm.T).reshape(n, oh, ow, cout).transpose(0, 3, 1, 2) + bv[None, :, None, None]
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout)
        # Patches are rebuilt from the padded input instead of being stored.
        dw = (gm.T @ _im2col(xp, kh, kw, stride)).reshape(wv.shape)
        db = g.sum(axis=(0, 2, 3))
        dpatch = (gm @ wm).reshape(n, oh, ow, cin, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dpatch[
                    :, :, i, j
                ]
        return dxp[:, :, ph : ph + h, pw : pw + win], dw, db

    return Var(y, (x, w, b), vjp)


def linear(x: Var, w: Var, b: Var) -> Var:
    """[n, d] @ [out, d].T + [out]."""
    y = x.value @ w.value.T + b.value[None, :]
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        return g @ w.value, g.T @ x.value, g.sum(axis=0)

    return Var(y, (x, w, b), vjp)


def pixel_shuffle(x: Var, r: int) -> Var:
    """[n, c*r*r, h, w] -> [n, c, h*r, w*r] pure element rearrangement."""
    n, crr, h, w = x.value.shape
    if crr % (r * r) != 0:
        raise ValueError(f"pixel_shuffle: {crr} channels not divisible by {r * r}")
    c = crr // (r * r)
    y = (
        x.value.reshape(n, c, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, c, h * r, w * r)
    )
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        dx = (
            g.reshape(n, c, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, crr, h, w)
        )
        return (dx,)

    return Var(y, (x,), vjp)


def upsample_bilinear(x: Var, out_h: int, out_w: int) -> Var:
    """Triangle-kernel resize as a linear map (no clamping)."""
    mh = resize_matrix(x.value.shape[2], out_h, "bilinear")
    mw = resize_matrix(x.value.shape[3], out_w, "bilinear")
    y = np.einsum("ij,ncjk,lk->ncil", mh, x.value, mw, optimize=True)
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        return (np.einsum("ij,ncil,lk->ncjk", mh, g, mw, optimize=True),)

    return Var(y, (x,), vjp)


# ------------------------------------------------------------------- losses


def mse_loss(pred: Var, target: np.ndarray) -> Var:
    diff = pred.value - target
    y = np.float64(np.mean(diff * diff))
    if not _State.enabled:
        return Var(y)
    inv = 2.0 / diff.size
    return Var(y, (pred,), lambda g: (g * inv * diff,))


def l1_loss(pred: Var, target: np.ndarray) -> Var:
    diff = pred.value - target
    y = np.float64(np.mean(np.abs(diff)))
    if not _State.enabled:
        return Var(y)
    inv = 1.0 / diff.size
    return Var(y, (pred,), lambda g: (g * inv * np.sign(diff),))


def cross_entropy(logits: Var, labels: np.ndarray) -> Var:
    """Mean softmax cross-entropy; labels are int class indices [n]."""
    z = logits.value
    n = z.shape[0]
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(n), labels]
    y = np.float64(np.mean(logsumexp - picked))
    if not _State.enabled:
        return Var(y)

    def vjp(g):
        soft = np.exp(z - zmax)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[np.arange(n), labels] -= 1.0
        return (g * soft / n,)

    return Var(y, (logits,), vjp)
