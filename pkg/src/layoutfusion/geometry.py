"""Axis-aligned box geometry in normalized page coordinates.

All boxes live in the unit square: x grows rightward, y grows downward,
and every coordinate is in [0, 1]. Degenerate (zero width or height)
boxes are rejected at construction because they poison IoU and the
variance-based fusion formulas downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BoundingBox", "iou", "giou", "clamp_coordinates"]


@dataclass(frozen=True)
class BoundingBox:
    """Normalized rectangle with strict ordering invariants.

    Invariants: 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"box coordinate {name}={value!r} is not finite")
            if value < 0.0 or value > 1.0:
                raise ValueError(f"box coordinate {name}={value} outside [0, 1]")
        if not self.x1 < self.x2:
            raise ValueError(f"degenerate box: x1={self.x1} >= x2={self.x2}")
        if not self.y1 < self.y2:
            raise ValueError(f"degenerate box: y1={self.y1} >= y2={self.y2}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    @classmethod
    def from_array(cls, coords) -> "BoundingBox":
        x1, y1, x2, y2 = (float(c) for c in coords)
        return cls(x1, y1, x2, y2)


def clamp_coordinates(coords) -> tuple[list[float], int]:
    """Clamp raw coordinates into [0, 1], counting how many moved.

    Used at ingest; validity (x1 < x2 etc.) is checked afterwards so a
    clamp that collapses a box still surfaces as an error.
    """
    clamped = []
    moved = 0
    for c in coords:
        c = float(c)
        bounded = min(1.0, max(0.0, c))
        if bounded != c:
            moved += 1
        clamped.append(bounded)
    return clamped, moved


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union. Symmetric, in [0, 1], 1 iff identical."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    intersection = ix * iy
    union = a.area + b.area - intersection
    return intersection / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: IoU minus enclosing-hull slack over hull area.

    Equals IoU when the hull coincides with the union (e.g. one box
    contains the other); tends to -1 for far-separated small boxes.
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    intersection = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - intersection
    hull_w = max(a.x2, b.x2) - min(a.x1, b.x1)
    hull_h = max(a.y2, b.y2) - min(a.y1, b.y1)
    hull = hull_w * hull_h
    return intersection / union - (hull - union) / hull
