"""Training loops: Adam on MSE, adversarial (non-saturating logistic + pixel
L1), and softmax cross-entropy classification.

Determinism contract: given (seed, config, corpus) every checkpoint is
bit-identical across runs. Adam moments are kept in float64 and parameters are
rounded back to float32 after each update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..degrade import DegradationSpec, make_training_pairs
from ..imagecore import load_image
from ..imagecore.corpus import CorpusManifest
from . import autodiff as ad
from .models import Model, graph_forward, param_vars


class NonFiniteLossError(RuntimeError):
    """A loss turned NaN/Inf; message carries the offending values."""


@dataclass
class TrainConfig:
    mode: str = "mse"  # mse | gan | classification
    steps: int = 3000
    batch: int = 8
    crop: int = 32
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    adv_weight: float = 5e-3
    seed: int = 0
    train_degradation: DegradationSpec = field(default_factory=lambda: DegradationSpec("clean"))

    def __post_init__(self) -> None:
        if self.mode not in ("mse", "gan", "classification"):
            raise ValueError(f"unknown train mode {self.mode!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.adv_weight < 0:
            raise ValueError("adv_weight must be >= 0")


class AdamState:
    """First/second moment accumulators (float64) plus the step counter."""

    def __init__(self, model: Model):
        self.m = {n: np.zeros(p.shape, dtype=np.float64) for n, p in model.params.items()}
        self.v = {n: np.zeros(p.shape, dtype=np.float64) for n, p in model.params.items()}
        self.t = 0


def adam_update(
    model: Model, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig
) -> None:
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in model.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.shape, dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        step = cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p[...] = (p.astype(np.float64) - step).astype(np.float32)


def _check_finite(step_label: str, **losses: float) -> None:
    bad = {k: v for k, v in losses.items() if not np.isfinite(v)}
    if bad:
        raise NonFiniteLossError(f"non-finite loss at {step_label}: {bad} (all: {losses})")


def _grads_of(pvars: dict[str, ad.Var]) -> dict[str, np.ndarray]:
    return {n: v.grad for n, v in pvars.items() if v.grad is not None}


def train_step_mse(
    model: Model, lr_batch: np.ndarray, hr_batch: np.ndarray, state: AdamState, cfg: TrainConfig
) -> float:
    """One Adam update on mean squared error; returns the scalar loss."""
    pvars = param_vars(model)
    out, _ = graph_forward(model, ad.Var(lr_batch), pvars)
    loss = ad.mse_loss(out, np.asarray(hr_batch, np.float64))
    _check_finite(f"mse step {state.t + 1}", mse=float(loss.value))
    ad.backward(loss)
    adam_update(model, _grads_of(pvars), state, cfg)
    return float(loss.value)


def disc_step(
    disc: Model, real: np.ndarray, fake: np.ndarray, state: AdamState, cfg: TrainConfig
) -> float:
    """Critic update: softplus(-D(real)) + softplus(D(fake)), fake detached."""
    pvars = param_vars(disc)
    real_logit, _ = graph_forward(disc, ad.Var(real), pvars)
    fake_logit, _ = graph_forward(disc, ad.Var(fake), pvars)
    loss = ad.add(
        ad.mean_all(ad.softplus(ad.neg(real_logit))),
        ad.mean_all(ad.softplus(fake_logit)),
    )
    _check_finite(f"disc step {state.t + 1}", disc=float(loss.value))
    ad.backward(loss)
    adam_update(disc, _grads_of(pvars), state, cfg)
    return float(loss.value)


def train_step_gan(
    gen: Model,
    disc: Model,
    lr_batch: np.ndarray,
    hr_batch: np.ndarray,
    gen_state: AdamState,
    disc_state: AdamState,
    cfg: TrainConfig,
) -> tuple[float, float]:
    """Alternating critic/generator update; returns (generator, critic) losses.

    Generator loss is pixel L1 plus adv_weight times the non-saturating
    adversarial term; with adv_weight == 0 the update is exactly the L1 one.
    """
    hr64 = np.asarray(hr_batch, np.float64)
    with ad.no_grad():
        sr_detached, _ = graph_forward(gen, ad.Var(lr_batch), param_vars(gen))
    d_loss = disc_step(disc, hr64, sr_detached.value, disc_state, cfg)

    gvars = param_vars(gen)
    sr, _ = graph_forward(gen, ad.Var(lr_batch), gvars)
    loss = ad.l1_loss(sr, hr64)
    if cfg.adv_weight > 0:
        fake_logit, _ = graph_forward(disc, sr, param_vars(disc))
        loss = ad.add(loss, ad.scale(ad.mean_all(ad.softplus(ad.neg(fake_logit))), cfg.adv_weight))
    g_loss = float(loss.value)
    _check_finite(f"gan step {gen_state.t + 1}", gen=g_loss, disc=d_loss)
    ad.backward(loss)
    adam_update(gen, _grads_of(gvars), gen_state, cfg)
    return g_loss, d_loss


def _batches(pairs, batch: int):
    while True:
        lrs, hrs = zip(*(next(pairs) for _ in range(batch)))
        yield np.concatenate(lrs, axis=0), np.concatenate(hrs, axis=0)


def train_sr(
    gen: Model,
    manifest: CorpusManifest,
    cfg: TrainConfig,
    disc: Model | None = None,
    log_path: str | None = None,
) -> dict[str, str]:
    """Full SR training loop over seeded (LR, HR) crops; returns metadata."""
    if cfg.mode == "gan" and disc is None:
        raise ValueError("gan mode needs a discriminator model")
    pairs = make_training_pairs(manifest, gen.spec.scale, cfg.train_degradation, cfg.crop, cfg.seed)
    stream = _batches(pairs, cfg.batch)
    gen_state = AdamState(gen)
    disc_state = AdamState(disc) if disc is not None else None

    log_rows = ["step\tg_loss\td_loss" if cfg.mode == "gan" else "step\tloss"]
    g_loss = d_loss = float("nan")
    for step in range(1, cfg.steps + 1):
        lr_batch, hr_batch = next(stream)
        if cfg.mode == "gan":
            g_loss, d_loss = train_step_gan(
                gen, disc, lr_batch, hr_batch, gen_state, disc_state, cfg
            )
        else:
            g_loss = train_step_mse(gen, lr_batch, hr_batch, gen_state, cfg)
        if step % 50 == 0 or step == 1 or step == cfg.steps:
            if cfg.mode == "gan":
                log_rows.append(f"{step}\t{g_loss!r}\t{d_loss!r}")
            else:
                log_rows.append(f"{step}\t{g_loss!r}")
    if log_path:
        Path(log_path).write_text("\n".join(log_rows) + "\n", encoding="utf-8")

    meta = {"seed": str(cfg.seed), "steps": str(cfg.steps), "final_loss": repr(g_loss)}
    if cfg.mode == "gan":
        meta["final_d_loss"] = repr(d_loss)
    return meta


def load_labeled_images(manifest: CorpusManifest) -> tuple[np.ndarray, np.ndarray]:
    entries = [e for e in manifest.entries if e.label is not None]
    if not entries:
        raise ValueError("manifest has no labeled entries")
    images = np.concatenate([load_image(manifest.image_path(e)) for e in entries], axis=0)
    labels = np.array([e.label for e in entries], dtype=np.int64)
    return images, labels


def classifier_accuracy(model: Model, images: np.ndarray, labels: np.ndarray, batch: int = 32) -> float:
    from .models import forward

    hits = 0
    for start in range(0, images.shape[0], batch):
        logits, _ = forward(model, images[start : start + batch])
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + batch]))
    return hits / images.shape[0]


def train_classifier(
    model: Model,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    log_path: str | None = None,
) -> dict[str, str]:
    """Softmax cross-entropy training on labeled images; reports train accuracy."""
    if labels.min() < 0 or labels.max() >= model.spec.num_classes:
        raise ValueError(
            f"labels must lie in [0, {model.spec.num_classes}), got "
            f"[{labels.min()}, {labels.max()}]"
        )
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = AdamState(model)
    n = images.shape[0]
    log_rows = ["step\tloss"]
    loss_value = float("nan")
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, n, size=min(cfg.batch, n))
        pvars = param_vars(model)
        logits, _ = graph_forward(model, ad.Var(images[idx]), pvars)
        loss = ad.cross_entropy(logits, labels[idx])
        loss_value = float(loss.value)
        _check_finite(f"classifier step {step}", ce=loss_value)
        ad.backward(loss)
        adam_update(model, _grads_of(pvars), state, cfg)
        if step % 50 == 0 or step == 1 or step == cfg.steps:
            log_rows.append(f"{step}\t{loss_value!r}")
    if log_path:
        Path(log_path).write_text("\n".join(log_rows) + "\n", encoding="utf-8")
    accuracy = classifier_accuracy(model, images, labels)
    return {
        "seed": str(cfg.seed),
        "steps": str(cfg.steps),
        "final_loss": repr(loss_value),
        "train_accuracy": repr(accuracy),
    }
