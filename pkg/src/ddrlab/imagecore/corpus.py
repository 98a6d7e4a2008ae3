"""Deterministic procedural image corpus.

Each image mixes smooth color gradients, oriented sinusoid textures, and
filled convex polygons. When class labels are requested, the class picks the
dominant shape family (0: textures, 1: polygons, 2: gradients, cycling) and a
small per-family channel tint, which keeps the classes separable even by a
linear pixel-space classifier.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..hashing import derive_seed
from .pnm import save_image

MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    path: str
    label: int | None = None


@dataclass
class CorpusManifest:
    entries: list[CorpusEntry]
    seed: int
    image_size: tuple[int, int]
    root: Path

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("corpus ids must be unique")
        labels = sorted({e.label for e in self.entries if e.label is not None})
        if labels and labels != list(range(len(labels))):
            raise ValueError(f"class labels must cover a contiguous range, got {labels}")

    def image_path(self, entry: CorpusEntry) -> Path:
        return self.root / entry.path


def _convex_polygon_mask(xx: np.ndarray, yy: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    k = int(rng.integers(3, 7))
    ang0 = rng.uniform(0.0, 2.0 * np.pi)
    angles = ang0 + np.arange(k) * (2.0 * np.pi / k)
    radius = rng.uniform(0.10, 0.32)
    sx, sy = rng.uniform(0.5, 1.5, size=2)
    cx, cy = rng.uniform(0.12, 0.88, size=2)
    vx = cx + radius * sx * np.cos(angles)
    vy = cy + radius * sy * np.sin(angles)

    inside = np.ones(xx.shape, dtype=bool)
    px, py = vx.mean(), vy.mean()
    for i in range(k):
        j = (i + 1) % k
        ex, ey = vx[j] - vx[i], vy[j] - vy[i]
        grid_side = (xx - vx[i]) * ey - (yy - vy[i]) * ex
        center_side = (px - vx[i]) * ey - (py - vy[i]) * ex
        inside &= grid_side * center_side >= 0.0
    return inside


def render_image(
    rng: np.random.Generator,
    h: int,
    w: int,
    family: int | None = None,
    tint: bool = False,
) -> np.ndarray:
    """Render one [1, 3, h, w] image; ``family`` biases the dominant content."""
    fam = int(rng.integers(0, 3)) if family is None else family % 3
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij"
    )

    grad_strength = 0.9 if fam == 2 else rng.uniform(0.1, 0.45)
    base = rng.uniform(0.2, 0.8, size=3)
    gx = rng.uniform(-1.0, 1.0, size=3) * grad_strength
    gy = rng.uniform(-1.0, 1.0, size=3) * grad_strength
    img = base[:, None, None] + gx[:, None, None] * (xx - 0.5) + gy[:, None, None] * (yy - 0.5)

    if fam == 2:
        for _ in range(int(rng.integers(1, 3))):
            bx, by = rng.uniform(0.2, 0.8, size=2)
            rad = rng.uniform(0.15, 0.45)
            bump = np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2.0 * rad * rad))
            img += rng.uniform(-0.4, 0.4, size=3)[:, None, None] * bump

    n_sin = int(rng.integers(4, 8)) if fam == 0 else int(rng.integers(0, 3))
    for _ in range(n_sin):
        freq = rng.uniform(2.0, 11.0)
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.18, 0.45) if fam == 0 else rng.uniform(0.05, 0.18)
        color = rng.uniform(0.3, 1.0, size=3)
        wx, wy = rng.uniform(0.15, 0.85, size=2)
        span = rng.uniform(0.25, 0.8)
        window = np.exp(-((xx - wx) ** 2 + (yy - wy) ** 2) / (2.0 * span * span))
        wave = np.sin(2.0 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += amp * color[:, None, None] * wave * window

    n_poly = int(rng.integers(3, 7)) if fam == 1 else int(rng.integers(0, 2))
    for _ in range(n_poly):
        mask = _convex_polygon_mask(xx, yy, rng)
        color = rng.uniform(0.0, 1.0, size=3)
        alpha = rng.uniform(0.6, 1.0) if fam == 1 else rng.uniform(0.25, 0.6)
        blend = alpha * mask
        img = img * (1.0 - blend) + color[:, None, None] * blend

    img = 0.5 + (img - 0.5) * rng.uniform(0.75, 1.1)
    if tint:
        img[fam] += 0.14
        img[(fam + 1) % 3] -= 0.05
    return np.clip(img, 0.0, 1.0)[None, ...]


def write_manifest(manifest: CorpusManifest, path: str | os.PathLike, extra: str = "") -> None:
    h, w = manifest.image_size
    header = f"#corpus v1 seed={manifest.seed} size={h}x{w}"
    if extra:
        header += " " + extra
    lines = [header]
    for e in manifest.entries:
        label = "-" if e.label is None else str(e.label)
        lines.append(f"{e.id}\t{e.path}\t{label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | os.PathLike) -> CorpusManifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#corpus v1 "):
        raise ValueError(f"{path}: not a corpus manifest")
    tokens = dict(t.split("=", 1) for t in lines[0][1:].split()[2:])
    h, w = (int(v) for v in tokens["size"].split("x"))
    entries = []
    for line in lines[1:]:
        if not line.strip():
            continue
        ident, rel, label = line.split("\t")
        entries.append(CorpusEntry(ident, rel, None if label == "-" else int(label)))
    manifest = CorpusManifest(entries, int(tokens["seed"]), (h, w), path.parent)
    for e in manifest.entries:
        if not manifest.image_path(e).exists():
            raise ValueError(f"{path}: missing image {e.path}")
    return manifest


def generate_corpus(
    out_dir: str | os.PathLike,
    seed: int,
    count: int,
    size: tuple[int, int],
    classes: int = 0,
    manifest_extra: str = "",
) -> CorpusManifest:
    """Write ``count`` procedural images plus a manifest; bit-identical per seed.

    classes > 0 assigns labels round-robin (image i gets class i % classes) and
    makes the class drive the dominant shape family.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if classes < 0:
        raise ValueError("classes must be >= 0")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h, w = size

    entries = []
    for i in range(count):
        ident = f"img{i:04d}"
        label = i % classes if classes > 0 else None
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, ident)))
        img = render_image(rng, h, w, family=label, tint=label is not None)
        rel = f"{ident}.ppm"
        save_image(img, out_dir / rel)
        entries.append(CorpusEntry(ident, rel, label))

    manifest = CorpusManifest(entries, seed, (h, w), out_dir)
    write_manifest(manifest, out_dir / MANIFEST_NAME, manifest_extra)
    return manifest
