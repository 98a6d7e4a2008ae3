"""Calinski-Harabasz cluster separability over labeled 2-D embeddings.

CHI = (B / (k - 1)) / (W / (n - k)), with B the between-group scatter
sum_i n_i ||c_i - c||^2 and W the within-group scatter. Zero within-scatter is
reported through a typed sentinel rather than a floating-point infinity.
Multi-seed reports aggregate mean and population standard deviation and are
banded as in the source four-level legend: "-" for [0, 20), "+" for [20, 100),
"++" for [100, 500), "+++" for >= 500.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .embed import Embedding2D


class InfiniteSeparability:
    """Sentinel for zero within-group scatter (perfectly collapsed clusters)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITE_SEPARABILITY"


INFINITE_SEPARABILITY = InfiniteSeparability()


@dataclass
class ClusterStats:
    k: int
    n: int
    between: float
    within: float
    centroids: dict[Hashable, np.ndarray]
    global_centroid: np.ndarray


def cluster_stats(points: np.ndarray, labels: Sequence[Hashable]) -> ClusterStats:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"expected an n x d point matrix, got shape {points.shape}")
    labels = list(labels)
    if len(labels) != points.shape[0]:
        raise ValueError("labels must match the number of points")
    groups: dict[Hashable, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    k, n = len(groups), points.shape[0]
    if k < 2:
        raise ValueError(f"need at least 2 label groups, got {k}")
    if n <= k:
        raise ValueError(f"need more points than groups, got n={n} k={k}")

    center = points.mean(axis=0)
    between = 0.0
    within = 0.0
    centroids: dict[Hashable, np.ndarray] = {}
    for lab, idx in groups.items():
        member = points[idx]
        centroid = member.mean(axis=0)
        centroids[lab] = centroid
        between += len(idx) * float(np.sum((centroid - center) ** 2))
        within += float(np.sum((member - centroid) ** 2))
    return ClusterStats(k, n, between, within, centroids, center)


def chi(points: np.ndarray, labels: Sequence[Hashable]) -> float | InfiniteSeparability:
    """Calinski-Harabasz score; sentinel when within-scatter is exactly zero."""
    stats = cluster_stats(points, labels)
    if stats.within == 0.0:
        return INFINITE_SEPARABILITY
    return (stats.between / (stats.k - 1)) / (stats.within / (stats.n - stats.k))


def band(score: float) -> str:
    if score >= 500:
        return "+++"
    if score >= 100:
        return "++"
    if score >= 20:
        return "+"
    return "-"


GROUPINGS = ("kind", "class", "degree")


def group_labels(
    emb: Embedding2D, grouping: str, buckets: Sequence[float] | None = None
) -> list[str]:
    """Per-point group keys for one embedding.

    "degree" maps each point's recorded degree to the nearest declared bucket
    and requires a match within +-0.5.
    """
    if grouping == "kind":
        if not emb.kinds:
            raise ValueError("embedding carries no degradation kinds")
        return list(emb.kinds)
    if grouping == "class":
        if not emb.classes.size or (emb.classes < 0).any():
            raise ValueError("embedding carries no class labels")
        return [str(int(c)) for c in emb.classes]
    if grouping == "degree":
        if buckets is None or len(buckets) < 2:
            raise ValueError("degree grouping needs at least 2 buckets")
        if not emb.degrees.size:
            raise ValueError("embedding carries no degrees")
        keys = []
        buckets = sorted(buckets)
        for value in emb.degrees:
            nearest = min(buckets, key=lambda b: abs(b - value))
            if abs(nearest - value) > 0.5:
                raise ValueError(f"degree {value} is not within 0.5 of any bucket {buckets}")
            keys.append(f"{nearest:g}")
        return keys
    raise ValueError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")


@dataclass
class ChiReport:
    grouping: str
    seeds: list[int]
    scores: list[float]
    mean: float
    std: float

    def band(self) -> str:
        return band(self.mean)


def chi_report(
    embeddings: list[Embedding2D], grouping: str, buckets: Sequence[float] | None = None
) -> ChiReport:
    """CHI per seed on the chosen grouping, aggregated as mean +- population std."""
    if len(embeddings) < 2:
        raise ValueError("need at least 2 embeddings (seeds) for a report")
    reference = group_labels(embeddings[0], grouping, buckets)
    scores: list[float] = []
    seeds: list[int] = []
    for emb in embeddings:
        labels = group_labels(emb, grouping, buckets)
        if sorted(set(labels)) != sorted(set(reference)):
            raise ValueError(
                f"label sets differ across seeds: {sorted(set(labels))} vs {sorted(set(reference))}"
            )
        score = chi(emb.points, labels)
        if isinstance(score, InfiniteSeparability):
            raise ValueError("degenerate embedding with zero within-scatter; cannot aggregate")
        scores.append(score)
        seeds.append(emb.seed)
    mean = float(np.mean(scores))
    std = float(np.std(scores))  # population std
    return ChiReport(grouping=grouping, seeds=seeds, scores=scores, mean=mean, std=std)


def save_report(report: ChiReport, path: str | os.PathLike, extra_header: str = "") -> None:
    header = f"#chireport v1 grouping={report.grouping}"
    if extra_header:
        header += " " + extra_header
    lines = [header]
    for seed, score in zip(report.seeds, report.scores):
        lines.append(f"{report.grouping}\t{seed}\t{score!r}")
    lines.append(f"#summary mean={report.mean!r} std={report.std!r} band={report.band()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_report(path: str | os.PathLike) -> ChiReport:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#chireport v1 "):
        raise ValueError(f"{path}: not a CHI report")
    grouping = lines[0].split("grouping=", 1)[1].split()[0]
    seeds, scores = [], []
    for line in lines[1:]:
        if line.startswith("#") or not line.strip():
            continue
        _, seed, score = line.split("\t")
        seeds.append(int(seed))
        scores.append(float(score))
    mean = float(np.mean(scores))
    std = float(np.std(scores))
    return ChiReport(grouping=grouping, seeds=seeds, scores=scores, mean=mean, std=std)
