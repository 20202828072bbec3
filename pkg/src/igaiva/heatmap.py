"""Recall-error field over a 2-D projection and region geometry.

The field is a normalized Gaussian kernel regression (Nadaraya-Watson) of
per-sample correctness, so every grid value is an error *rate* in [0, 1].
A confidence channel carries the local kernel mass, giving the renderer an
explicit uncertainty (alpha) layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

DEFAULT_EPSILON = 0.125
_ON_LINE_TOL = 1e-12
# Kernel mass treated as "fully confident": three samples at distance zero.
_FULL_CONFIDENCE_MASS = 3.0


@dataclass(frozen=True)
class CorrectnessSample:
    """A test message's position in projection space and its verdict."""

    id: str
    x: float
    y: float
    correct: bool

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DataError(f"sample {self.id!r} has non-finite coordinates")


@dataclass(frozen=True)
class DivisionLine:
    """The line a*x + b*y = c with (a, b) != (0, 0).

    Side A is the half-plane a*x + b*y < c, side B the opposite one;
    points within 1e-12 of the line sit on neither side.
    """

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        if self.a == 0.0 and self.b == 0.0:
            raise DataError("degenerate division line: normal vector is zero")

    @classmethod
    def vertical(cls, x: float) -> "DivisionLine":
        return cls(1.0, 0.0, x)

    @classmethod
    def horizontal(cls, y: float) -> "DivisionLine":
        return cls(0.0, 1.0, y)

    @classmethod
    def axis_aligned(cls, axis: str, threshold: float) -> "DivisionLine":
        if axis == "x":
            return cls.vertical(threshold)
        if axis == "y":
            return cls.horizontal(threshold)
        raise DataError(f"axis must be 'x' or 'y', got {axis!r}")

    def side_of(self, x: float, y: float) -> str:
        s = self.a * x + self.b * y - self.c
        if abs(s) <= _ON_LINE_TOL:
            return "on"
        return "A" if s < 0 else "B"

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class HalfPlane:
    line: DivisionLine
    side: str  # "A" or "B"

    def __post_init__(self) -> None:
        if self.side not in ("A", "B"):
            raise DataError(f"half-plane side must be 'A' or 'B', got {self.side!r}")


@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned rectangle, inclusive of the lower/left edges and
    exclusive of the upper/right ones."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DataError("rectangle must have x0 < x1 and y0 < y1")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass(frozen=True)
class PolygonRegion:
    """Simple polygon; membership uses the even-odd rule."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise DataError("polygon needs at least 3 vertices")
        if _self_intersects(self.vertices):
            raise DataError("polygon is self-intersecting")

    def contains(self, x: float, y: float) -> bool:
        inside = False
        n = len(self.vertices)
        for k in range(n):
            x1, y1 = self.vertices[k]
            x2, y2 = self.vertices[(k + 1) % n]
            if (y1 > y) != (y2 > y):
                x_cross = (x2 - x1) * (y - y1) / (y2 - y1) + x1
                if x < x_cross:
                    inside = not inside
        return inside


Region = HalfPlane | RectRegion | PolygonRegion


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _self_intersects(vertices: Sequence[tuple[float, float]]) -> bool:
    n = len(vertices)
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share an endpoint; skip them
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = vertices[j], vertices[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                return True
    return False


@dataclass(frozen=True)
class ErrorField:
    """W x H grid of estimated error rate plus a kernel-mass confidence grid.

    Grids are row-major with row i at normalized y = i / (H - 1) and column
    j at normalized x = j / (W - 1); bbox maps normalized [0,1]^2 back to
    projection coordinates.
    """

    width: int
    height: int
    bbox: tuple[float, float, float, float]  # (xmin, ymin, xmax, ymax)
    values: np.ndarray  # (H, W) in [0, 1]
    confidence: np.ndarray  # (H, W) in [0, 1]
    epsilon: float

    def __post_init__(self) -> None:
        if self.values.shape != (self.height, self.width):
            raise DataError("value grid shape mismatch")
        if self.confidence.shape != (self.height, self.width):
            raise DataError("confidence grid shape mismatch")

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "error_field",
            "width": self.width,
            "height": self.height,
            "bbox": list(self.bbox),
            "epsilon": self.epsilon,
            "values": [float(v) for v in self.values.ravel()],
            "confidence": [float(v) for v in self.confidence.ravel()],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "ErrorField":
        w, h = int(doc["width"]), int(doc["height"])  # type: ignore[arg-type]
        return cls(
            width=w,
            height=h,
            bbox=tuple(doc["bbox"]),  # type: ignore[arg-type]
            values=np.asarray(doc["values"], dtype=float).reshape(h, w),
            confidence=np.asarray(doc["confidence"], dtype=float).reshape(h, w),
            epsilon=float(doc["epsilon"]),  # type: ignore[arg-type]
        )


def normalize_bbox(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float, float]:
    """Data bounding box expanded by 5% of the range on every side (range 1.0
    is assumed for a degenerate axis)."""
    xmin, xmax = float(xs.min()), float(xs.max())
    ymin, ymax = float(ys.min()), float(ys.max())
    xrange = xmax - xmin if xmax > xmin else 1.0
    yrange = ymax - ymin if ymax > ymin else 1.0
    return (xmin - 0.05 * xrange, ymin - 0.05 * yrange, xmax + 0.05 * xrange, ymax + 0.05 * yrange)


def rbf_error_field(
    samples: Sequence[CorrectnessSample],
    grid: tuple[int, int] = (64, 64),
    epsilon: float = DEFAULT_EPSILON,
) -> ErrorField:
    """Gaussian kernel regression of the misclassification indicator.

    Coordinates are min-max normalized into [0,1]^2 (with 5% padding), the
    kernel weight of sample s at grid point p is exp(-|p - s|^2 / (2 eps^2)),
    and value(p) is the weight-normalized mean of the per-sample error
    indicators. confidence(p) = min(1, kernel mass / 3). Where the kernel
    mass is below 1e-12 both value and confidence are 0.
    """
    if not samples:
        raise DataError("need at least one correctness sample")
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    W, H = int(grid[0]), int(grid[1])
    if W < 2 or H < 2:
        raise DataError(f"grid must be at least 2x2, got {grid}")

    xs = np.array([s.x for s in samples], dtype=float)
    ys = np.array([s.y for s in samples], dtype=float)
    err = np.array([0.0 if s.correct else 1.0 for s in samples])
    bbox = normalize_bbox(xs, ys)
    xmin, ymin, xmax, ymax = bbox
    sx = (xs - xmin) / (xmax - xmin)
    sy = (ys - ymin) / (ymax - ymin)

    gx = np.linspace(0.0, 1.0, W)
    gy = np.linspace(0.0, 1.0, H)
    # (H, W, n) squared distances, evaluated row-blockwise to bound memory
    values = np.zeros((H, W))
    confidence = np.zeros((H, W))
    inv = 1.0 / (2.0 * epsilon * epsilon)
    for i in range(H):
        dx = gx[:, None] - sx[None, :]  # (W, n)
        dy = gy[i] - sy[None, :]  # (1, n)
        w = np.exp(-(dx * dx + dy * dy) * inv)
        mass = w.sum(axis=1)
        num = w @ err
        ok = mass >= 1e-12
        values[i, ok] = num[ok] / mass[ok]
        confidence[i, ok] = np.minimum(1.0, mass[ok] / _FULL_CONFIDENCE_MASS)
    np.clip(values, 0.0, 1.0, out=values)
    return ErrorField(width=W, height=H, bbox=bbox, values=values, confidence=confidence, epsilon=epsilon)


def partition_by_line(
    points: Iterable[tuple[str, float, float]],
    line: DivisionLine,
) -> tuple[list[str], list[str], list[str]]:
    """Split points into (side_A, side_B, on_line) by sign of a*x + b*y - c."""
    side_a: list[str] = []
    side_b: list[str] = []
    on_line: list[str] = []
    for pid, x, y in points:
        side = line.side_of(x, y)
        if side == "A":
            side_a.append(pid)
        elif side == "B":
            side_b.append(pid)
        else:
            on_line.append(pid)
    return side_a, side_b, on_line


def region_membership(points: Iterable[tuple[str, float, float]], region: Region) -> set[str]:
    """Ids of the points inside the region.

    Half-planes use strict inequality on the chosen side; rectangles include
    their lower/left edges only; polygons use the even-odd rule.
    """
    members: set[str] = set()
    if isinstance(region, HalfPlane):
        for pid, x, y in points:
            if region.line.side_of(x, y) == region.side:
                members.add(pid)
    elif isinstance(region, RectRegion):
        for pid, x, y in points:
            if region.contains(x, y):
                members.add(pid)
    elif isinstance(region, PolygonRegion):
        for pid, x, y in points:
            if region.contains(x, y):
                members.add(pid)
    else:
        raise DataError(f"unsupported region type {type(region).__name__}")
    return members


def region_from_json(doc: Mapping[str, object]) -> Region:
    """Parse a region spec: {"kind": "halfplane"|"rect"|"polygon", ...}."""
    kind = doc.get("kind")
    if kind == "halfplane":
        line = doc.get("line", {})
        return HalfPlane(
            line=DivisionLine(float(line["a"]), float(line["b"]), float(line["c"])),  # type: ignore[index]
            side=str(doc.get("side", "A")),
        )
    if kind == "rect":
        return RectRegion(float(doc["x0"]), float(doc["y0"]), float(doc["x1"]), float(doc["y1"]))  # type: ignore[arg-type]
    if kind == "polygon":
        verts = tuple((float(x), float(y)) for x, y in doc["vertices"])  # type: ignore[union-attr]
        return PolygonRegion(vertices=verts)
    raise DataError(f"unknown region kind {kind!r}")


def region_to_json(region: Region) -> dict:
    if isinstance(region, HalfPlane):
        return {"kind": "halfplane", "line": region.line.to_json(), "side": region.side}
    if isinstance(region, RectRegion):
        return {"kind": "rect", "x0": region.x0, "y0": region.y0, "x1": region.x1, "y1": region.y1}
    if isinstance(region, PolygonRegion):
        return {"kind": "polygon", "vertices": [list(v) for v in region.vertices]}
    raise DataError(f"unsupported region type {type(region).__name__}")


def save_error_field(field: ErrorField, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(field.to_json()), encoding="utf-8")


def load_error_field(path: str | Path) -> ErrorField:
    path = Path(path)
    if not path.exists():
        raise DataError(f"error-field file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("kind") != "error_field":
        raise DataError(f"{path}: not an error-field file")
    return ErrorField.from_json(doc)
