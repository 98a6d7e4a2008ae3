"""Per-image feature vectors tapped at named layers, plus raw feature-map dumps.

Pooling modes: "gap" averages each channel over space (d = channels, size
independent); "flatten" keeps the full map row-major (requires uniform image
sizes). Row order is (triplet order) x (variant order within each triplet).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..autonet.models import Model, forward
from ..degrade import EvalTriplet
from ..imagecore import save_image

POOLINGS = ("gap", "flatten")


@dataclass
class FeatureSet:
    """n_images x d feature matrix with per-row degradation/class labels."""

    layer: str
    pooling: str
    vectors: np.ndarray
    ids: list[str]
    kinds: list[str]
    degrees: np.ndarray
    classes: np.ndarray  # -1 where unlabeled
    provenance: tuple[str, str] = ("", "")

    def __post_init__(self) -> None:
        n = self.vectors.shape[0]
        if not (len(self.ids) == len(self.kinds) == self.degrees.shape[0] == self.classes.shape[0] == n):
            raise ValueError("label arrays must match the number of feature rows")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("feature vectors must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def select(self, kinds: Iterable[str]) -> "FeatureSet":
        wanted = set(kinds)
        mask = np.array([k in wanted for k in self.kinds], dtype=bool)
        return replace(
            self,
            vectors=self.vectors[mask],
            ids=[i for i, keep in zip(self.ids, mask) if keep],
            kinds=[k for k, keep in zip(self.kinds, mask) if keep],
            degrees=self.degrees[mask],
            classes=self.classes[mask],
        )


def concat_features(sets: list[FeatureSet]) -> FeatureSet:
    first = sets[0]
    for fs in sets[1:]:
        if fs.layer != first.layer or fs.pooling != first.pooling or fs.dim != first.dim:
            raise ValueError("feature sets must share layer, pooling and dimension")
    return FeatureSet(
        layer=first.layer,
        pooling=first.pooling,
        vectors=np.concatenate([fs.vectors for fs in sets], axis=0),
        ids=[i for fs in sets for i in fs.ids],
        kinds=[k for fs in sets for k in fs.kinds],
        degrees=np.concatenate([fs.degrees for fs in sets]),
        classes=np.concatenate([fs.classes for fs in sets]),
        provenance=first.provenance,
    )


def extract_features(
    model: Model,
    triplets: list[EvalTriplet],
    taps: Iterable[str],
    pooling: str = "gap",
    kinds: Iterable[str] | None = None,
    provenance: tuple[str, str] = ("", ""),
    tap_transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> dict[str, FeatureSet]:
    """Run each image variant through the model and pool the tapped activations.

    ``kinds`` optionally restricts which variants are probed. ``tap_transform``
    is a test hook applied to each tapped map before pooling.
    """
    taps = list(taps)
    if pooling not in POOLINGS:
        raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    wanted = None if kinds is None else set(kinds)

    rows: dict[str, list[np.ndarray]] = {t: [] for t in taps}
    ids: list[str] = []
    row_kinds: list[str] = []
    degrees: list[float] = []
    classes: list[int] = []
    for triplet in triplets:
        for kind, img in triplet.variants.items():
            if wanted is not None and kind not in wanted:
                continue
            _, acts = forward(model, img, taps)
            for tap in taps:
                act = acts[tap]
                if tap_transform is not None:
                    act = tap_transform(act)
                if pooling == "gap":
                    vec = act.mean(axis=(2, 3))[0]
                else:
                    vec = act.reshape(-1)
                rows[tap].append(vec)
            ids.append(triplet.id)
            row_kinds.append(kind)
            degrees.append(triplet.degrees[kind])
            classes.append(-1 if triplet.class_label is None else triplet.class_label)

    out: dict[str, FeatureSet] = {}
    for tap in taps:
        dims = {v.shape[0] for v in rows[tap]}
        if len(dims) > 1:
            raise ValueError(
                f"flatten pooling needs uniform image sizes; got dims {sorted(dims)} at {tap}"
            )
        out[tap] = FeatureSet(
            layer=tap,
            pooling=pooling,
            vectors=np.stack(rows[tap], axis=0),
            ids=list(ids),
            kinds=list(row_kinds),
            degrees=np.array(degrees, dtype=np.float64),
            classes=np.array(classes, dtype=np.int64),
            provenance=provenance,
        )
    return out


def save_features(fs: FeatureSet, path: str | os.PathLike, extra_header: str = "") -> None:
    header = f"#features v1 layer={fs.layer} pooling={fs.pooling} dim={fs.dim}"
    if extra_header:
        header += " " + extra_header
    lines = [header]
    for i in range(fs.vectors.shape[0]):
        cls = "-" if fs.classes[i] < 0 else str(int(fs.classes[i]))
        values = "\t".join(repr(float(v)) for v in fs.vectors[i])
        lines.append(f"{fs.ids[i]}\t{fs.kinds[i]}\t{float(fs.degrees[i])!r}\t{cls}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path: str | os.PathLike) -> FeatureSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#features v1 "):
        raise ValueError(f"{path}: not a feature TSV")
    tokens = dict(t.split("=", 1) for t in lines[0][1:].split()[2:] if "=" in t)
    ids, kinds, degrees, classes, vectors = [], [], [], [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        ids.append(parts[0])
        kinds.append(parts[1])
        degrees.append(float(parts[2]))
        classes.append(-1 if parts[3] == "-" else int(parts[3]))
        vectors.append([float(v) for v in parts[4:]])
    return FeatureSet(
        layer=tokens["layer"],
        pooling=tokens["pooling"],
        vectors=np.array(vectors, dtype=np.float64),
        ids=ids,
        kinds=kinds,
        degrees=np.array(degrees, dtype=np.float64),
        classes=np.array(classes, dtype=np.int64),
    )


def dump_feature_maps(
    model: Model,
    image: np.ndarray,
    tap: str,
    top_k: int,
    ranking: str = "variance",
    out_prefix: str | os.PathLike | None = None,
) -> tuple[np.ndarray, list[tuple[int, float]]]:
    """Tile the top_k channels of one tapped activation into a grayscale grid.

    Channels are ranked by the chosen per-map statistic ("variance" over
    spatial positions, or "energy" = mean square), ties broken by channel
    index. Each selected map is min-max normalized; flat maps render mid-gray.
    Returns the grid image and the full (channel, statistic) ranking; when
    ``out_prefix`` is given, writes <prefix>.pgm and <prefix>.tsv.
    """
    _, acts = forward(model, image, {tap})
    maps = acts[tap][0]
    c, h, w = maps.shape
    if top_k > c:
        raise ValueError(f"top_k {top_k} exceeds {c} channels at {tap}")
    if ranking == "variance":
        stats = maps.var(axis=(1, 2))
    elif ranking == "energy":
        stats = (maps * maps).mean(axis=(1, 2))
    else:
        raise ValueError(f"unknown ranking {ranking!r}")

    order = np.argsort(-stats, kind="stable")
    report = [(int(ch), float(stats[ch])) for ch in order]

    cols = math.ceil(math.sqrt(top_k))
    rows = math.ceil(top_k / cols)
    gap = 2
    grid = np.full((rows * h + (rows + 1) * gap, cols * w + (cols + 1) * gap), 0.5)
    for slot, ch in enumerate(order[:top_k]):
        m = maps[ch]
        span = m.max() - m.min()
        tile = np.full_like(m, 0.5) if span == 0 else (m - m.min()) / span
        r, col = divmod(slot, cols)
        top = gap + r * (h + gap)
        left = gap + col * (w + gap)
        grid[top : top + h, left : left + w] = tile

    if out_prefix is not None:
        prefix = Path(out_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        save_image(grid[None, None, :, :], prefix.with_suffix(".pgm"))
        lines = [f"#featuremaps v1 tap={tap} ranking={ranking} top_k={top_k}"]
        lines += [f"{ch}\t{stat!r}" for ch, stat in report]
        prefix.with_suffix(".tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return grid[None, None, :, :], report
