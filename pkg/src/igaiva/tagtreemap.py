"""Tag-treemap: k keyword clouds laid out inside a squarified treemap whose
cells are sized by subset cardinality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Message
from .errors import DataError
from .features import KeywordStats, keyword_stats


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise DataError(f"degenerate rectangle {self!r}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class TreemapCell:
    name: str
    rect: Rect
    weight: float
    stats: KeywordStats
    # normalized font sizes in (0, 1], proportional to sqrt(term count)
    tag_sizes: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "rect": self.rect.to_json(),
            "weight": self.weight,
            "stats": self.stats.to_json(),
            "tag_sizes": list(self.tag_sizes),
        }


@dataclass(frozen=True)
class TreemapLayout:
    root: Rect
    cells: tuple[TreemapCell, ...]

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "tag_treemap",
            "root": self.root.to_json(),
            "cells": [c.to_json() for c in self.cells],
        }


def _worst_aspect(row: Sequence[float], short_side: float) -> float:
    total = sum(row)
    thickness = total / short_side
    worst = 0.0
    for a in row:
        length = a / thickness
        worst = max(worst, thickness / length, length / thickness)
    return worst


def layout_squarified(weights: Sequence[float], rect: Rect) -> list[Rect]:
    """Squarified treemap layout (row-building that greedily minimizes the
    worst aspect ratio).

    Rectangles are returned in input order and tile `rect` exactly, with
    areas proportional to the weights. The classic algorithm expects weights
    in descending order; the function is deterministic for any given order.
    Strips are laid along the shorter side: a vertical strip on the left
    when the remaining rectangle is at least as wide as it is tall, else a
    horizontal strip on top.
    """
    if not weights:
        raise DataError("no weights given")
    if any(w <= 0 or not math.isfinite(w) for w in weights):
        raise DataError("all weights must be positive and finite")
    total = float(sum(weights))
    areas = [w / total * rect.area for w in weights]
    out: list[Rect] = []
    x, y, w, h = rect.x, rect.y, rect.w, rect.h
    i = 0
    n = len(areas)
    while i < n:
        short = min(w, h)
        row = [areas[i]]
        j = i + 1
        while j < n:
            if _worst_aspect(row + [areas[j]], short) <= _worst_aspect(row, short):
                row.append(areas[j])
                j += 1
            else:
                break
        row_total = sum(row)
        last = j == n
        if w >= h:
            # vertical strip on the left, cells stacked top to bottom
            thickness = w if last and row_total >= w * h - 1e-12 else row_total / h
            thickness = min(thickness, w)
            cy = y
            for a in row:
                cell_h = a / thickness
                out.append(Rect(x, cy, thickness, cell_h))
                cy += cell_h
            x += thickness
            w -= thickness
        else:
            # horizontal strip on top, cells laid left to right
            thickness = h if last and row_total >= w * h - 1e-12 else row_total / w
            thickness = min(thickness, h)
            cx = x
            for a in row:
                cell_w = a / thickness
                out.append(Rect(cx, y, cell_w, thickness))
                cx += cell_w
            y += thickness
            h -= thickness
        i = j
        if i < n and (w <= 1e-12 or h <= 1e-12):
            raise DataError("treemap layout exhausted the rectangle before placing all weights")
    return out


def build_tag_treemap(
    groups: Sequence[tuple[str, Sequence[Message]]] | Mapping[str, Sequence[Message]],
    top_k: int,
    rect: Rect | None = None,
    stopwords: str | frozenset[str] | None = "es+en",
) -> TreemapLayout:
    """One treemap cell per non-empty group, sized by subset cardinality and
    carrying that subset's keyword statistics.

    Groups are laid out in descending size order (ties broken by name).
    Tag sizes scale with the square root of the term count, normalized so
    the most frequent term in a cell has size 1.
    """
    if isinstance(groups, Mapping):
        named = list(groups.items())
    else:
        named = list(groups)
    named = [(name, list(msgs)) for name, msgs in named if msgs]
    if not named:
        raise DataError("all groups are empty")
    named.sort(key=lambda g: (-len(g[1]), g[0]))
    root = rect or Rect(0.0, 0.0, 1.0, 1.0)
    rects = layout_squarified([len(msgs) for _, msgs in named], root)
    cells = []
    for (name, msgs), cell_rect in zip(named, rects):
        stats = keyword_stats(msgs, top_k, stopwords=stopwords)
        if stats.entries:
            top = math.sqrt(stats.entries[0][1])
            sizes = tuple(math.sqrt(c) / top for _, c, _ in stats.entries)
        else:
            sizes = ()
        cells.append(
            TreemapCell(name=name, rect=cell_rect, weight=float(len(msgs)), stats=stats, tag_sizes=sizes)
        )
    return TreemapLayout(root=root, cells=tuple(cells))
