"""Axis-aligned box arithmetic in corner form ``(x1, y1, x2, y2)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels


class GeometryError(ValueError):
    """Raised when a geometric quantity is undefined for the given boxes."""


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates {vals}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise GeometryError(f"box has x2 < x1 or y2 < y1: {vals}")

    @classmethod
    def from_cxcywh(cls, cx, cy, w, h) -> "Box":
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.as_tuple(), dtype=dtype or np.float64)

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1


BoxLike = Union[Box, Sequence[float], np.ndarray]


def _coords(b: BoxLike):
    if isinstance(b, Box):
        return b.as_tuple()
    x1, y1, x2, y2 = (float(v) for v in b)
    return x1, y1, x2, y2


def area(b: BoxLike) -> float:
    x1, y1, x2, y2 = _coords(b)
    return (x2 - x1) * (y2 - y1)


def _inter_union(a, b):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(min(ax2, bx2) - max(ax1, bx1), 0.0)
    ih = max(min(ay2, by2) - max(ay1, by1), 0.0)
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter, union


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union; 0 when the union is empty."""
    inter, union = _inter_union(_coords(a), _coords(b))
    return inter / union if union > 0.0 else 0.0


def giou(a: BoxLike, b: BoxLike) -> float:
    """Generalized IoU: ``iou - (hull - union) / hull``.

    Raises GeometryError if both boxes are degenerate (the hull may then be
    empty and the value is undefined).
    """
    ca, cb = _coords(a), _coords(b)
    if area(ca) <= 0.0 and area(cb) <= 0.0:
        raise GeometryError("giou undefined for two degenerate boxes")
    inter, union = _inter_union(ca, cb)
    hull = (max(ca[2], cb[2]) - min(ca[0], cb[0])) * (max(ca[3], cb[3]) - min(ca[1], cb[1]))
    if hull <= 0.0:
        raise GeometryError("giou undefined: empty hull")
    value = inter / union if union > 0.0 else 0.0
    return value - (hull - union) / hull


# vectorized forms ------------------------------------------------------------


def as_boxes(boxes) -> np.ndarray:
    """Coerce to a float64 ``(N, 4)`` array."""
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    return arr.reshape(-1, 4)


def validate_boxes(boxes: np.ndarray) -> None:
    if not np.all(np.isfinite(boxes)):
        raise GeometryError("non-finite box coordinates")
    if np.any(boxes[:, 2] < boxes[:, 0]) or np.any(boxes[:, 3] < boxes[:, 1]):
        raise GeometryError("boxes must satisfy x2 >= x1 and y2 >= y1")


def box_area(boxes) -> np.ndarray:
    b = as_boxes(boxes)
    return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])


def box_iou(boxes1, boxes2) -> np.ndarray:
    """Pairwise IoU, shape ``(N, M)``."""
    return _kernels.pairwise_iou(as_boxes(boxes1), as_boxes(boxes2))


def box_giou(boxes1, boxes2) -> np.ndarray:
    """Pairwise generalized IoU, shape ``(N, M)``."""
    a, b = as_boxes(boxes1), as_boxes(boxes2)
    ious = box_iou(a, b)
    area_a, area_b = box_area(a), box_area(b)
    iw = np.maximum(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0.0)
    ih = np.maximum(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0.0)
    union = area_a[:, None] + area_b[None, :] - iw * ih
    hull = ((np.maximum(a[:, None, 2], b[None, :, 2]) - np.minimum(a[:, None, 0], b[None, :, 0]))
            * (np.maximum(a[:, None, 3], b[None, :, 3]) - np.minimum(a[:, None, 1], b[None, :, 1])))
    if np.any(hull <= 0.0):
        raise GeometryError("giou undefined for a pair of degenerate boxes")
    return ious - (hull - union) / hull


def cxcywh_to_xyxy(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    half = b[:, 2:] / 2
    return np.concatenate([b[:, :2] - half, b[:, :2] + half], axis=1)


def xyxy_to_cxcywh(boxes) -> np.ndarray:
    b = as_boxes(boxes)
    return np.concatenate([(b[:, :2] + b[:, 2:]) / 2, b[:, 2:] - b[:, :2]], axis=1)


def aligned_iou(boxes1, boxes2) -> np.ndarray:
    """IoU of matching rows of two ``(N, 4)`` arrays; 0 where the union is empty."""
    a, b = as_boxes(boxes1), as_boxes(boxes2)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    iw = np.maximum(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0)
    ih = np.maximum(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0)
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def aligned_giou(boxes1, boxes2) -> np.ndarray:
    """Generalized IoU of matching rows of two ``(N, 4)`` arrays."""
    a, b = as_boxes(boxes1), as_boxes(boxes2)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    iw = np.maximum(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0)
    ih = np.maximum(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0)
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    hull = ((np.maximum(a[:, 2], b[:, 2]) - np.minimum(a[:, 0], b[:, 0]))
            * (np.maximum(a[:, 3], b[:, 3]) - np.minimum(a[:, 1], b[:, 1])))
    if np.any(hull <= 0.0):
        raise GeometryError("giou undefined for a pair of degenerate boxes")
    ious = np.zeros_like(inter)
    np.divide(inter, union, out=ious, where=union > 0.0)
    return ious - (hull - union) / hull
