"""Network architectures: SR generators (with/without a global residual path),
a strided patch critic, and a small residual classifier.

Generators contain no normalization layers. The global-residual variant adds
the bilinearly upsampled input to the tail output, so an all-zero-weight model
degenerates to plain bilinear upsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

LEAKY_SLOPE = 0.1
_GAIN_LRELU = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))

KINDS = ("sr_generator", "discriminator", "classifier")


@dataclass(frozen=True)
class ArchSpec:
    kind: str
    global_residual: bool = False
    n_blocks: int = 8
    channels: int = 16
    scale: int = 4
    num_classes: int = 0
    in_channels: int = 3

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.channels < 4:
            raise ValueError("channels must be >= 4")
        if self.kind == "sr_generator" and self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.kind == "classifier" and self.num_classes < 2:
            raise ValueError("classifier needs num_classes >= 2")


def _layout(spec: ArchSpec) -> list[tuple[str, tuple[int, ...], float]]:
    """Ordered (name, shape, init gain) triples; gain 0 marks a zero-init bias."""
    ch, cin = spec.channels, spec.in_channels
    entries: list[tuple[str, tuple[int, ...], float]] = []

    def conv(name: str, cout: int, cin_: int, k: int, gain: float) -> None:
        entries.append((f"{name}.w", (cout, cin_, k, k), gain))
        entries.append((f"{name}.b", (cout,), 0.0))

    if spec.kind == "sr_generator":
        conv("head", ch, cin, 3, _GAIN_LRELU)
        for k in range(1, spec.n_blocks + 1):
            conv(f"block{k}.conv1", ch, ch, 3, _GAIN_LRELU)
            conv(f"block{k}.conv2", ch, ch, 3, 1.0)
        conv("trunk", ch, ch, 3, 1.0)
        for s in range(int(math.log2(spec.scale))):
            conv(f"up{s + 1}", ch * 4, ch, 3, _GAIN_LRELU)
        conv("tail", cin, ch, 3, 1.0)
    elif spec.kind == "discriminator":
        widths = [ch, 2 * ch, 4 * ch, 4 * ch]
        prev = cin
        for i, width in enumerate(widths, start=1):
            conv(f"stage{i}", width, prev, 3, _GAIN_LRELU)
            prev = width
        entries.append(("fc.w", (1, prev), 1.0))
        entries.append(("fc.b", (1,), 0.0))
    else:
        conv("head", ch, cin, 3, _GAIN_LRELU)
        for k in range(1, spec.n_blocks + 1):
            conv(f"block{k}.conv1", ch, ch, 3, _GAIN_LRELU)
            conv(f"block{k}.conv2", ch, ch, 3, 1.0)
            if k % 2 == 0:
                conv(f"block{k}.proj", ch, ch, 1, 1.0)
        entries.append(("fc.w", (spec.num_classes, ch), 1.0))
        entries.append(("fc.b", (spec.num_classes,), 0.0))
    return entries


class Model:
    """Architecture spec plus named float32 parameter arrays."""

    def __init__(self, spec: ArchSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params

    def tap_names(self) -> list[str]:
        blocks = [f"ResBlock{k}" for k in range(1, self.spec.n_blocks + 1)]
        if self.spec.kind == "sr_generator":
            return ["Conv1", *blocks, "Output"]
        if self.spec.kind == "classifier":
            return ["Conv1", *blocks, "Logits"]
        return ["Logits"]

    def deepest_block_tap(self) -> str:
        return f"ResBlock{self.spec.n_blocks}"

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def build(spec: ArchSpec, seed: int) -> Model:
    """Initialize a model: fan-in-scaled Gaussian weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, np.ndarray] = {}
    for name, shape, gain in _layout(spec):
        if gain == 0.0:
            params[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = gain / math.sqrt(fan_in)
            params[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
    return Model(spec, params)


def _graph(
    spec: ArchSpec, x: ad.Var, p: dict[str, ad.Var], taps: set[str]
) -> tuple[ad.Var, dict[str, ad.Var]]:
    acts: dict[str, ad.Var] = {}

    def record(name: str, node: ad.Var) -> None:
        if name in taps:
            acts[name] = node

    def conv(h: ad.Var, name: str, stride: int = 1) -> ad.Var:
        return ad.conv2d(h, p[f"{name}.w"], p[f"{name}.b"], stride=stride)

    if spec.kind == "sr_generator":
        h = ad.leaky_relu(conv(x, "head"), LEAKY_SLOPE)
        record("Conv1", h)
        for k in range(1, spec.n_blocks + 1):
            t = ad.leaky_relu(conv(h, f"block{k}.conv1"), LEAKY_SLOPE)
            t = conv(t, f"block{k}.conv2")
            h = ad.add(h, t)
            record(f"ResBlock{k}", h)
        h = conv(h, "trunk")
        for s in range(int(math.log2(spec.scale))):
            h = ad.leaky_relu(ad.pixel_shuffle(conv(h, f"up{s + 1}"), 2), LEAKY_SLOPE)
        y = conv(h, "tail")
        if spec.global_residual:
            _, _, hin, win = x.value.shape
            y = ad.add(y, ad.upsample_bilinear(x, hin * spec.scale, win * spec.scale))
        record("Output", y)
        return y, acts

    if spec.kind == "discriminator":
        h = x
        for i in range(1, 5):
            h = ad.leaky_relu(conv(h, f"stage{i}", stride=2), LEAKY_SLOPE)
        y = ad.linear(ad.global_mean(h), p["fc.w"], p["fc.b"])
        record("Logits", y)
        return y, acts

    h = ad.leaky_relu(conv(x, "head"), LEAKY_SLOPE)
    record("Conv1", h)
    for k in range(1, spec.n_blocks + 1):
        stride = 2 if k % 2 == 0 else 1
        t = ad.leaky_relu(conv(h, f"block{k}.conv1", stride=stride), LEAKY_SLOPE)
        t = conv(t, f"block{k}.conv2")
        skip = conv(h, f"block{k}.proj", stride=2) if stride == 2 else h
        h = ad.add(skip, t)
        record(f"ResBlock{k}", h)
    y = ad.linear(ad.global_mean(h), p["fc.w"], p["fc.b"])
    record("Logits", y)
    return y, acts


def param_vars(model: Model) -> dict[str, ad.Var]:
    """Wrap the float32 parameters as float64 graph leaves, in layout order."""
    return {name: ad.Var(value.astype(np.float64)) for name, value in model.params.items()}


def graph_forward(
    model: Model, x: ad.Var, p: dict[str, ad.Var], taps: set[str] | None = None
) -> tuple[ad.Var, dict[str, ad.Var]]:
    return _graph(model.spec, x, p, taps or set())


def forward(
    model: Model, batch: np.ndarray, taps: set[str] | tuple[str, ...] = ()
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Deterministic inference returning the output and requested activations."""
    if batch.ndim != 4:
        raise ValueError(f"expected [n, c, h, w] batch, got shape {batch.shape}")
    if batch.shape[1] != model.spec.in_channels:
        raise ValueError(
            f"batch has {batch.shape[1]} channels, model expects {model.spec.in_channels}"
        )
    taps = set(taps)
    unknown = taps - set(model.tap_names())
    if unknown:
        raise ValueError(f"unknown taps {sorted(unknown)}; valid: {model.tap_names()}")
    with ad.no_grad():
        out, acts = _graph(model.spec, ad.Var(batch), param_vars(model), taps)
    return out.value, {name: node.value for name, node in acts.items()}
