"""Stand-in for a trained detector head: noisy box predictions from anchor sites.

Every query looks at the object it fits best (closest centre, with a
penalty for a reference size far from the object's size) and predicts that
object's box with a jitter that grows with both mismatches. The score is the predicted
box's IoU with the object plus Gaussian noise. ``rho`` mixes a per-object
shared noise term into both, so anchors on the same object predict nearly
identical boxes and scores as ``rho`` approaches 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..geometry import aligned_iou
from ..pyramid import DEFAULT_STRIDES, dense_anchors
from ..selection import QuerySet
from . import rng as rngmod
from .scene import Scene

MAX_CENTRE_DIST = 8.0


@dataclass(frozen=True)
class QueryNoiseModel:
    sigma_box: float = 0.05  # jitter as a fraction of object size
    sigma_score: float = 0.05
    rho: float = 0.5
    dist_gain: float = 1.0
    scale_gain: float = 0.5

    def __post_init__(self):
        if self.sigma_box < 0 or self.sigma_score < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.dist_gain < 0 or self.scale_gain < 0:
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class PyramidConfig:
    strides: Tuple[int, ...] = DEFAULT_STRIDES
    ref_scale: float = 4.0  # reference object size of a level, in strides

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if self.ref_scale <= 0:
            raise ValueError("ref_scale must be positive")


def _predict(points, ref_sizes, scene: Scene, noise: QueryNoiseModel, rng: np.random.Generator):
    n = len(points)
    gts = scene.boxes
    g = len(gts)
    if g == 0:
        half = ref_sizes[:, None] / 2
        boxes = np.concatenate([points - half, points + half], axis=1)
        z = rng.standard_normal(n)
        scores = np.clip(noise.sigma_score * z, 0.0, 1.0)
        meta = {"gt": np.full(n, -1), "centre_dist": np.full(n, MAX_CENTRE_DIST),
                "scale_gap": np.zeros(n), "iou": np.zeros(n)}
        return boxes, scores, meta

    cx = (gts[:, 0] + gts[:, 2]) / 2
    cy = (gts[:, 1] + gts[:, 3]) / 2
    w = gts[:, 2] - gts[:, 0]
    h = gts[:, 3] - gts[:, 1]
    # Chebyshev distance to each centre in units of half-size: <= 1 inside the box
    u = np.maximum(np.abs(points[:, None, 0] - cx[None]) / (w[None] / 2),
                   np.abs(points[:, None, 1] - cy[None]) / (h[None] / 2))
    gaps = np.abs(np.log(ref_sizes[:, None] / np.sqrt(w * h)[None]))
    mismatch = noise.dist_gain * np.minimum(u, MAX_CENTRE_DIST) + noise.scale_gain * gaps
    nearest = np.argmin(mismatch, axis=1)
    rows = np.arange(n)
    dist = np.minimum(u[rows, nearest], MAX_CENTRE_DIST)
    scale_gap = gaps[rows, nearest]
    mult = 1.0 + mismatch[rows, nearest]

    a, b = math.sqrt(noise.rho), math.sqrt(1.0 - noise.rho)
    shared_box = rng.standard_normal((g, 4))
    shared_score = rng.standard_normal(g)
    own_box = rng.standard_normal((n, 4))
    own_score = rng.standard_normal(n)

    size = np.stack([w, h, w, h], axis=1)[nearest]
    jitter = (a * shared_box[nearest] + b * own_box) * size * (noise.sigma_box * mult)[:, None]
    raw = gts[nearest] + jitter
    boxes = np.concatenate([np.minimum(raw[:, :2], raw[:, 2:]), np.maximum(raw[:, :2], raw[:, 2:])], axis=1)
    ious = aligned_iou(boxes, gts[nearest])
    scores = np.clip(ious + noise.sigma_score * (a * shared_score[nearest] + b * own_score), 0.0, 1.0)
    meta = {"gt": nearest, "centre_dist": dist, "scale_gap": scale_gap, "iou": ious}
    return boxes, scores, meta


def generate_dense_queries(scene: Scene, pyramid_cfg: PyramidConfig = PyramidConfig(),
                           noise: QueryNoiseModel = QueryNoiseModel()) -> QuerySet:
    """One query per feature-pyramid cell of the scene's image."""
    anchors = dense_anchors(scene.image_h, scene.image_w, pyramid_cfg.strides)
    ref = anchors.strides.astype(np.float64) * pyramid_cfg.ref_scale
    rng = rngmod.substream(scene.seed, rngmod.QUERIES)
    boxes, scores, meta = _predict(anchors.points, ref, scene, noise, rng)
    meta.update(anchor=anchors.points, ref_size=ref)
    return QuerySet(boxes, scores, anchors.levels, anchors.index, meta=meta, validate=False)


def generate_sparse_queries(scene: Scene, n: int, noise: QueryNoiseModel = QueryNoiseModel(),
                            size_range=(32.0, 160.0)) -> QuerySet:
    """``n`` scene-independent queries: uniform positions with log-uniform sizes.

    The sampled prior box supplies the anchor (its centre) and reference size;
    predictions then follow the same noise model as dense queries.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rngmod.substream(scene.seed, rngmod.SPARSE)
    pts = np.stack([rng.uniform(0, scene.image_w, n), rng.uniform(0, scene.image_h, n)], axis=1)
    ref = np.exp(rng.uniform(math.log(size_range[0]), math.log(size_range[1]), n))
    boxes, scores, meta = _predict(pts, ref, scene, noise, rng)
    meta.update(anchor=pts, ref_size=ref)
    return QuerySet(boxes, scores, np.zeros(n, dtype=np.int64), np.arange(n), meta=meta, validate=False)


def subsample_queries(qs: QuerySet, n: int, seed: int) -> QuerySet:
    """First ``n`` queries of a seeded permutation, kept in original order.

    Subsets for increasing ``n`` are nested.
    """
    if n >= len(qs):
        return qs
    perm = rngmod.substream(seed, rngmod.SUBSAMPLE).permutation(len(qs))
    return qs.take(np.sort(perm[:n]))
