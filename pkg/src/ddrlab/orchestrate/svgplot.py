"""Deterministic SVG scatterplots of 2-D embeddings.

Convention: marker shape encodes the degradation kind (circle, square,
triangle), color encodes the object class when classes are present, otherwise
the kind. Output bytes are a pure function of the embedding and style.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..embed import Embedding2D

PALETTE = (
    "#4477aa",
    "#ee6677",
    "#228833",
    "#ccbb44",
    "#66ccee",
    "#aa3377",
    "#bbbbbb",
    "#e07030",
    "#44aa99",
    "#332288",
)
MARKERS = ("circle", "square", "triangle", "diamond")
_KIND_MARKERS = {"clean": "circle", "blur": "square", "noise": "triangle"}

WIDTH, HEIGHT, MARGIN, LEGEND_W = 640, 480, 36, 150
MAX_GROUPS = 20


def _group_keys(emb: Embedding2D) -> list[tuple[str, str]]:
    """(kind, class) per point; '-' where a facet is absent."""
    n = emb.points.shape[0]
    kinds = emb.kinds if emb.kinds else ["-"] * n
    if emb.classes.size and (emb.classes >= 0).any():
        classes = [str(int(c)) if c >= 0 else "-" for c in emb.classes]
    else:
        classes = ["-"] * n
    return list(zip(kinds, classes))


def default_style(emb: Embedding2D) -> dict[tuple[str, str], tuple[str, str]]:
    """Map each (kind, class) group to (color, marker)."""
    keys = sorted(set(_group_keys(emb)))
    kinds = sorted({k for k, _ in keys})
    classes = sorted({c for _, c in keys})
    have_classes = classes != ["-"]
    style = {}
    for kind, cls in keys:
        marker = _KIND_MARKERS.get(kind, MARKERS[kinds.index(kind) % len(MARKERS)])
        color_index = classes.index(cls) if have_classes else kinds.index(kind)
        style[(kind, cls)] = (PALETTE[color_index % len(PALETTE)], marker)
    return style


def _marker_svg(marker: str, x: float, y: float, size: float, color: str) -> str:
    if marker == "circle":
        return f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{size:.3f}" fill="{color}"/>'
    if marker == "square":
        s = size * 1.8
        return (
            f'<rect x="{x - s / 2:.3f}" y="{y - s / 2:.3f}" width="{s:.3f}" '
            f'height="{s:.3f}" fill="{color}"/>'
        )
    if marker == "triangle":
        s = size * 2.2
        pts = f"{x:.3f},{y - s / 2:.3f} {x - s / 2:.3f},{y + s / 2:.3f} {x + s / 2:.3f},{y + s / 2:.3f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    s = size * 2.0
    pts = f"{x:.3f},{y - s / 2:.3f} {x + s / 2:.3f},{y:.3f} {x:.3f},{y + s / 2:.3f} {x - s / 2:.3f},{y:.3f}"
    return f'<polygon points="{pts}" fill="{color}"/>'


def emit_svg_scatter(
    emb: Embedding2D,
    style: dict[tuple[str, str], tuple[str, str]] | None = None,
    path: str | os.PathLike | None = None,
    comment: str = "",
) -> str:
    """Render one marker per point plus a legend; byte-deterministic output."""
    keys = _group_keys(emb)
    if style is None:
        style = default_style(emb)
    groups = sorted(set(keys))
    if len(groups) > MAX_GROUPS:
        raise ValueError(f"{len(groups)} groups exceed the {MAX_GROUPS}-entry palette")
    missing = [g for g in groups if g not in style]
    if missing:
        raise ValueError(f"style missing entries for groups {missing}")

    pts = emb.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    plot_w = WIDTH - LEGEND_W - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN

    def to_px(p: np.ndarray) -> tuple[float, float]:
        x = MARGIN + (p[0] - lo[0]) / span[0] * plot_w
        y = MARGIN + (1.0 - (p[1] - lo[1]) / span[1]) * plot_h
        return float(x), float(y)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    ]
    if comment:
        lines.append(f"<!-- {comment} -->")
    lines.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    for i in range(pts.shape[0]):
        color, marker = style[keys[i]]
        x, y = to_px(pts[i])
        lines.append(_marker_svg(marker, x, y, 3.2, color))

    lx = WIDTH - LEGEND_W + 8
    ly = MARGIN + 6
    lines.append(f'<g font-family="sans-serif" font-size="12">')
    for j, group in enumerate(groups):
        color, marker = style[group]
        y = ly + j * 20
        lines.append(_marker_svg(marker, lx + 6, y, 3.6, color))
        kind, cls = group
        label = kind if cls == "-" else (cls if kind == "-" else f"{kind}/{cls}")
        lines.append(f'<text x="{lx + 18}" y="{y + 4}">{label}</text>')
    lines.append("</g>")
    lines.append("</svg>")
    svg = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(svg, encoding="utf-8")
    return svg
