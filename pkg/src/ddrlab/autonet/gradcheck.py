"""Central-finite-difference validation of the reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .models import Model, graph_forward

_LOSSES = ("mse", "l1", "sum")


def _loss_node(out: ad.Var, loss: str, target: np.ndarray | None) -> ad.Var:
    if loss == "mse":
        return ad.mse_loss(out, target)
    if loss == "l1":
        return ad.l1_loss(out, target)
    if loss == "sum":
        return ad.scale(ad.mean_all(out), float(out.value.size))
    raise ValueError(f"loss must be one of {_LOSSES}, got {loss!r}")


def analytic_grads(
    model: Model, x: np.ndarray, target: np.ndarray | None = None, loss: str = "mse"
) -> tuple[float, dict[str, np.ndarray]]:
    """Reverse-mode parameter gradients of the chosen loss; float64 throughout."""
    pvars = {n: ad.Var(p.astype(np.float64)) for n, p in model.params.items()}
    out, _ = graph_forward(model, ad.Var(x), pvars)
    node = _loss_node(out, loss, target)
    ad.backward(node)
    grads = {
        n: (v.grad if v.grad is not None else np.zeros_like(v.value)) for n, v in pvars.items()
    }
    return float(node.value), grads


def grad_check(
    model: Model,
    x: np.ndarray,
    target: np.ndarray | None = None,
    loss: str = "mse",
    step: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    The model fragment must be small (<= 2000 parameters); every parameter
    entry is perturbed by +-step in float64.
    """
    total = model.n_parameters()
    if total > 2000:
        raise ValueError(f"model has {total} parameters; grad_check caps at 2000")

    params64 = {n: p.astype(np.float64) for n, p in model.params.items()}

    def loss_at() -> float:
        with ad.no_grad():
            pvars = {n: ad.Var(p) for n, p in params64.items()}
            out, _ = graph_forward(model, ad.Var(x), pvars)
            return float(_loss_node(out, loss, target).value)

    probe = Model(model.spec, params64)  # float64 view for the analytic pass
    _, grads = analytic_grads(probe, x, target, loss)

    worst = 0.0
    for name, p in params64.items():
        flat = p.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_at()
            flat[i] = keep - step
            down = loss_at()
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
