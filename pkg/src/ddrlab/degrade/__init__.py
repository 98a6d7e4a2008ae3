"""Image degradation synthesis: Gaussian blur, additive Gaussian noise, clean.

Noise levels are specified on the 0-255 scale and divided by 255 internally.
Blur and noise never combine in one spec; "clean" is the identity degradation.
All randomized operations are pure functions of (inputs, seed), with per-image
seeds derived as hash(seed, image id) so edits to a corpus never reshuffle the
degrees sampled for other images.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..hashing import derive_seed
from ..imagecore import bicubic_resize, load_image, save_image
from ..imagecore.corpus import CorpusManifest

KINDS = ("clean", "blur", "noise")


@dataclass(frozen=True)
class DegradationSpec:
    """One degradation family with a fixed degree or a per-image sampling range.

    For blur, the degree is the Gaussian kernel width in pixels; for noise it
    is the standard deviation on the 0-255 scale.
    """

    kind: str
    blur_width: float | None = None
    kernel_size: int = 15
    noise_sigma: float | None = None
    sample_range: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.kind == "blur":
            if self.kernel_size < 3 or self.kernel_size % 2 == 0:
                raise ValueError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
            if self.sample_range is None and (self.blur_width is None or self.blur_width <= 0):
                raise ValueError("blur spec needs blur_width > 0 or a sample_range")
        if self.kind == "noise":
            if self.sample_range is None and (self.noise_sigma is None or self.noise_sigma < 0):
                raise ValueError("noise spec needs noise_sigma >= 0 or a sample_range")
        if self.sample_range is not None:
            lo, hi = self.sample_range
            if lo > hi:
                raise ValueError(f"sample_range lo must be <= hi, got {self.sample_range}")
            if self.kind == "clean":
                raise ValueError("clean spec takes no sample_range")

    def sample_degree(self, image_id: str) -> float:
        """Degree used for one image: fixed value or a seeded uniform draw."""
        if self.kind == "clean":
            return 0.0
        if self.sample_range is not None:
            rng = np.random.Generator(np.random.PCG64(derive_seed(self.seed, image_id)))
            lo, hi = self.sample_range
            return float(rng.uniform(lo, hi))
        return float(self.blur_width if self.kind == "blur" else self.noise_sigma)


@dataclass
class EvalTriplet:
    """Content-aligned degraded variants of one source image."""

    id: str
    clean: np.ndarray
    variants: dict[str, np.ndarray]
    degrees: dict[str, float]
    class_label: int | None = None


def gaussian_kernel_1d(sigma: float, size: int) -> np.ndarray:
    """Normalized 1-D Gaussian sampled at integer offsets from the center."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if size < 3 or size % 2 == 0:
        raise ValueError(f"size must be odd and >= 3, got {size}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Separable isotropic 2-D Gaussian kernel normalized to sum exactly 1."""
    k1 = gaussian_kernel_1d(sigma, size)
    k2 = np.outer(k1, k1)
    k2 /= k2.sum()
    # Pin the exact sum to 1.0 so downstream fixed-point identities hold.
    center = (size - 1) // 2
    k2[center, center] += 1.0 - k2.sum()
    return k2


def apply_blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D correlation with replicate (edge-clamp) padding, clamped to [0, 1].

    The kernel must be symmetric-normalized (as from gaussian_kernel), so
    correlation and convolution coincide and constant images are fixed points.
    """
    if img.ndim != 4 or img.shape[0] != 1:
        raise ValueError(f"expected image tensor [1, c, h, w], got {img.shape}")
    kh, kw = kernel.shape
    _, _, h, w = img.shape
    if kh > 2 * h or kw > 2 * w:
        raise ValueError(f"kernel {kh}x{kw} larger than twice the image extent {h}x{w}")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    out = np.einsum("nchwij,ij->nchw", windows, kernel, optimize=True)
    return np.clip(out, 0.0, 1.0)


def add_gaussian_noise(img: np.ndarray, sigma255: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, (sigma255/255)^2) noise, then clamp to [0, 1]."""
    if sigma255 < 0:
        raise ValueError(f"sigma255 must be >= 0, got {sigma255}")
    if sigma255 == 0:
        return img.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.normal(0.0, sigma255 / 255.0, size=img.shape)
    return np.clip(img + noise, 0.0, 1.0)


def degrade_image(img: np.ndarray, spec: DegradationSpec, image_id: str) -> tuple[np.ndarray, float]:
    """Apply one spec to one image; returns (variant, degree actually used)."""
    degree = spec.sample_degree(image_id)
    if spec.kind == "clean":
        return img, 0.0
    if spec.kind == "blur":
        return apply_blur(img, gaussian_kernel(degree, spec.kernel_size)), degree
    noise_seed = derive_seed(spec.seed, f"{image_id}/noise")
    return add_gaussian_noise(img, degree, noise_seed), degree


def build_eval_triplets(
    manifest: CorpusManifest, specs: list[DegradationSpec]
) -> list[EvalTriplet]:
    """Degrade every corpus image under every spec, recording sampled degrees."""
    if not manifest.entries:
        raise ValueError("empty corpus manifest")
    kinds = [s.kind for s in specs]
    if len(set(kinds)) != len(kinds):
        raise ValueError(f"duplicate degradation kinds in specs: {kinds}")
    if kinds.count("clean") != 1:
        raise ValueError("specs must include exactly one clean spec")

    triplets = []
    for entry in manifest.entries:
        clean = load_image(manifest.image_path(entry))
        variants: dict[str, np.ndarray] = {}
        degrees: dict[str, float] = {}
        for spec in specs:
            variant, degree = degrade_image(clean, spec, entry.id)
            variants[spec.kind] = variant
            degrees[spec.kind] = degree
        triplets.append(EvalTriplet(entry.id, clean, variants, degrees, entry.label))
    return triplets


def save_triplets(triplets: list[EvalTriplet], out_dir: str | os.PathLike) -> None:
    """Persist a triplet set as <set>/<kind>/<id>.ppm plus degrees.tsv."""
    out_dir = Path(out_dir)
    rows = []
    for t in triplets:
        for kind, img in t.variants.items():
            kind_dir = out_dir / kind
            kind_dir.mkdir(parents=True, exist_ok=True)
            save_image(img, kind_dir / f"{t.id}.ppm")
            rows.append(f"{t.id}\t{kind}\t{t.degrees[kind]!r}")
    (out_dir / "degrees.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_triplets(
    set_dir: str | os.PathLike, manifest: CorpusManifest | None = None
) -> list[EvalTriplet]:
    """Load a persisted triplet set; class labels come from ``manifest``."""
    set_dir = Path(set_dir)
    labels = {}
    if manifest is not None:
        labels = {e.id: e.label for e in manifest.entries}
    degrees: dict[str, dict[str, float]] = {}
    order: list[str] = []
    for line in (set_dir / "degrees.tsv").read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        ident, kind, degree = line.split("\t")
        if ident not in degrees:
            degrees[ident] = {}
            order.append(ident)
        degrees[ident][kind] = float(degree)
    triplets = []
    for ident in order:
        variants = {
            kind: load_image(set_dir / kind / f"{ident}.ppm") for kind in degrees[ident]
        }
        clean = variants.get("clean")
        if clean is None:
            clean = next(iter(variants.values()))
        triplets.append(
            EvalTriplet(ident, clean, variants, degrees[ident], labels.get(ident))
        )
    return triplets


def make_training_pairs(
    manifest: CorpusManifest,
    scale: int,
    train_degradation: DegradationSpec,
    crop: int,
    seed: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless seeded stream of (LR, HR) pairs.

    HR is a random crop of a corpus image; LR is its bicubic downscale with the
    training-time degradation applied on top (clean means no-op).
    """
    if scale not in (2, 4):
        raise ValueError(f"scale must be 2 or 4, got {scale}")
    if crop % scale != 0:
        raise ValueError(f"crop {crop} must be divisible by scale {scale}")
    h, w = manifest.image_size
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} larger than image size {h}x{w}")

    rng = np.random.Generator(np.random.PCG64(seed))
    cache: dict[str, np.ndarray] = {}
    n = len(manifest.entries)
    lr_size = crop // scale
    while True:
        entry = manifest.entries[int(rng.integers(0, n))]
        if entry.id not in cache:
            cache[entry.id] = load_image(manifest.image_path(entry))
        top = int(rng.integers(0, h - crop + 1))
        left = int(rng.integers(0, w - crop + 1))
        hr = cache[entry.id][:, :, top : top + crop, left : left + crop]
        lr = bicubic_resize(hr, lr_size, lr_size)
        if train_degradation.kind != "clean":
            sample_id = f"sample{int(rng.integers(0, 2**62))}"
            lr, _ = degrade_image(lr, _reseeded(train_degradation, rng), sample_id)
        yield lr, hr


def _reseeded(spec: DegradationSpec, rng: np.random.Generator) -> DegradationSpec:
    """Fresh per-sample seed drawn from the stream generator."""
    return DegradationSpec(
        kind=spec.kind,
        blur_width=spec.blur_width,
        kernel_size=spec.kernel_size,
        noise_sigma=spec.noise_sigma,
        sample_range=spec.sample_range,
        seed=int(rng.integers(0, 2**62)),
    )
