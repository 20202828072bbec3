"""Deterministic SVG emission for scatter plots, error-field heatmaps, and
tag-treemaps. Output is byte-for-byte reproducible under fixed inputs:
fixed float formatting, no timestamps, no generated ids.

Scatter color roles: training points yellow-green, test points blue when
classified correctly and red otherwise, synthetic points purple, all other
classes grey context.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .heatmap import CorrectnessSample, ErrorField
from .projection import Embedding2D
from .tagtreemap import TreemapLayout

COLORS = {
    "train": "#9ACD32",  # yellow-green
    "test_correct": "#1F77B4",  # blue
    "test_incorrect": "#D62728",  # red
    "synthetic": "#9467BD",  # purple
    "other": "#C8C8C8",  # grey context
}

_ROLE_ORDER = ("other", "train", "synthetic", "test_correct", "test_incorrect")


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _scale(points: np.ndarray, size: int, margin: int) -> np.ndarray:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    unit = (points - lo) / span
    # flip y so larger values render upward
    out = np.empty_like(unit)
    out[:, 0] = margin + unit[:, 0] * (size - 2 * margin)
    out[:, 1] = size - margin - unit[:, 1] * (size - 2 * margin)
    return out


def scatter_svg(
    embedding: Embedding2D,
    roles: Mapping[str, str],
    size: int = 640,
    radius: float = 3.0,
    title: str = "",
) -> str:
    """Scatter plot of an embedding with per-id roles (keys of COLORS).
    Context (grey) points render first so the colored ones stay visible."""
    margin = 24
    pts = _scale(embedding.points, size, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#FFFFFF"/>',
    ]
    if title:
        parts.append(f'<text x="{margin}" y="16" font-size="12" fill="#333333">{title}</text>')
    by_role: dict[str, list[int]] = {role: [] for role in _ROLE_ORDER}
    for i, mid in enumerate(embedding.ids):
        role = roles.get(mid, "other")
        by_role.setdefault(role, []).append(i)
    for role in _ROLE_ORDER:
        color = COLORS.get(role, COLORS["other"])
        for i in by_role.get(role, ()):  # insertion order within a role
            parts.append(
                f'<circle cx="{_fmt(pts[i, 0])}" cy="{_fmt(pts[i, 1])}" r="{radius}" '
                f'fill="{color}" fill-opacity="0.85"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _error_color(value: float) -> str:
    """Diverging blue (error 0) -> white (0.5) -> red (error 1)."""
    v = min(max(value, 0.0), 1.0)
    if v <= 0.5:
        t = v / 0.5
        r = int(31 + (255 - 31) * t)
        g = int(119 + (255 - 119) * t)
        b = int(180 + (255 - 180) * t)
    else:
        t = (v - 0.5) / 0.5
        r = int(255 + (214 - 255) * t)
        g = int(255 + (39 - 255) * t)
        b = int(255 + (40 - 255) * t)
    return f"#{r:02X}{g:02X}{b:02X}"


def heatmap_svg(
    field: ErrorField,
    samples: Sequence[CorrectnessSample] = (),
    size: int = 640,
    title: str = "",
) -> str:
    """Error-field raster with confidence as opacity, test samples overlaid
    as blue/red dots."""
    margin = 24
    plot = size - 2 * margin
    cell_w = plot / field.width
    cell_h = plot / field.height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#FFFFFF"/>',
    ]
    if title:
        parts.append(f'<text x="{margin}" y="16" font-size="12" fill="#333333">{title}</text>')
    for i in range(field.height):
        # row i sits at normalized y = i / (H - 1); render with y up
        cy = size - margin - (i / (field.height - 1)) * plot
        for j in range(field.width):
            conf = field.confidence[i, j]
            if conf <= 0.0:
                continue
            cx = margin + (j / (field.width - 1)) * plot
            parts.append(
                f'<rect x="{_fmt(cx - cell_w / 2)}" y="{_fmt(cy - cell_h / 2)}" '
                f'width="{_fmt(cell_w)}" height="{_fmt(cell_h)}" '
                f'fill="{_error_color(field.values[i, j])}" fill-opacity="{_fmt(conf)}"/>'
            )
    xmin, ymin, xmax, ymax = field.bbox
    for s in samples:
        nx = (s.x - xmin) / (xmax - xmin)
        ny = (s.y - ymin) / (ymax - ymin)
        color = COLORS["test_correct"] if s.correct else COLORS["test_incorrect"]
        parts.append(
            f'<circle cx="{_fmt(margin + nx * plot)}" cy="{_fmt(size - margin - ny * plot)}" '
            f'r="2.5" fill="{color}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def treemap_svg(layout: TreemapLayout, size: int = 640, max_tags: int = 12) -> str:
    """Treemap cells with their ranked keyword lists, font size scaled by
    each tag's normalized weight."""
    root = layout.root
    sx = size / root.w
    sy = size / root.h
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
    ]
    palette = ("#EFF3F8", "#E4EEE0", "#F8EFE4", "#F0E4F0", "#E0ECEF", "#F6F6E0")
    for idx, cell in enumerate(layout.cells):
        x = (cell.rect.x - root.x) * sx
        y = (cell.rect.y - root.y) * sy
        w = cell.rect.w * sx
        h = cell.rect.h * sy
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{palette[idx % len(palette)]}" stroke="#666666" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x + 4)}" y="{_fmt(y + 14)}" font-size="12" '
            f'font-weight="bold" fill="#222222">{cell.name} ({int(cell.weight)})</text>'
        )
        line_y = y + 30
        for (term, count, _weight), tag_size in list(zip(cell.stats.entries, cell.tag_sizes))[:max_tags]:
            font = 8 + 10 * tag_size
            if line_y + font > y + h:
                break
            parts.append(
                f'<text x="{_fmt(x + 6)}" y="{_fmt(line_y + font)}" '
                f'font-size="{_fmt(font)}" fill="#333333">{term} ({count})</text>'
            )
            line_y += font + 3
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
