"""Query sets, per-level top-k pre-selection and distinct query selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .geometry import Box, as_boxes, validate_boxes

FCN_THRESH = 0.7
DETR_THRESH = 0.8
DEFAULT_TOPK = 1000


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    box: Box
    score: float
    class_scores: Optional[tuple] = None
    level: int = 0
    id: int = 0


class QuerySet:
    """Struct-of-arrays container for an ordered collection of queries.

    ``boxes`` is ``(N, 4)``, ``scores``/``levels``/``ids`` are ``(N,)`` and the
    optional ``class_scores`` is ``(N, C)``. When class scores are given and
    ``scores`` is omitted, the score is their per-query maximum.
    """

    __slots__ = ("boxes", "scores", "levels", "ids", "class_scores", "meta")

    def __init__(self, boxes, scores=None, levels=None, ids=None, class_scores=None,
                 meta=None, validate=True):
        boxes = as_boxes(boxes)
        n = len(boxes)
        if class_scores is not None:
            class_scores = np.asarray(class_scores, dtype=np.float64).reshape(n, -1)
        if scores is None:
            if class_scores is None:
                raise QueryError("need scores or class_scores")
            scores = class_scores.max(axis=1) if class_scores.shape[1] else np.zeros(n)
        self.boxes = boxes
        self.scores = np.asarray(scores, dtype=np.float64).reshape(n)
        self.levels = (np.zeros(n, dtype=np.int64) if levels is None
                       else np.asarray(levels, dtype=np.int64).reshape(n))
        self.ids = (np.arange(n, dtype=np.int64) if ids is None
                    else np.asarray(ids, dtype=np.int64).reshape(n))
        self.class_scores = class_scores
        # per-query side arrays (features, anchors, ...) carried through subsetting
        self.meta = {k: np.asarray(v) for k, v in (meta or {}).items()}
        if validate:
            self.validate()

    def validate(self):
        validate_boxes(self.boxes)
        if np.any((self.scores < 0) | (self.scores > 1)) or not np.all(np.isfinite(self.scores)):
            raise QueryError("scores must lie in [0, 1]")
        if len(np.unique(self.ids)) != len(self.ids):
            raise QueryError("query ids must be unique")
        if self.class_scores is not None:
            cs = self.class_scores
            if np.any((cs < 0) | (cs > 1)):
                raise QueryError("class scores must lie in [0, 1]")
            if cs.shape[1] and not np.allclose(cs.max(axis=1), self.scores, rtol=0, atol=1e-12):
                raise QueryError("score must equal max(class_scores)")
        for k, v in self.meta.items():
            if len(v) != len(self.ids):
                raise QueryError(f"meta array {k!r} has wrong length")

    @classmethod
    def from_queries(cls, queries: Iterable[Query]) -> "QuerySet":
        queries = list(queries)
        if not queries:
            return cls.empty()
        cs = None
        if all(q.class_scores is not None for q in queries):
            cs = np.array([q.class_scores for q in queries], dtype=np.float64)
        return cls([q.box.as_tuple() for q in queries], [q.score for q in queries],
                   [q.level for q in queries], [q.id for q in queries], cs)

    @classmethod
    def empty(cls) -> "QuerySet":
        return cls(np.empty((0, 4)), np.empty(0))

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i) -> Query:
        cs = None if self.class_scores is None else tuple(self.class_scores[i].tolist())
        return Query(Box(*self.boxes[i].tolist()), float(self.scores[i]), cs,
                     int(self.levels[i]), int(self.ids[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, idx) -> "QuerySet":
        idx = np.asarray(idx, dtype=np.int64)
        return QuerySet(self.boxes[idx], self.scores[idx], self.levels[idx], self.ids[idx],
                        None if self.class_scores is None else self.class_scores[idx],
                        {k: v[idx] for k, v in self.meta.items()}, validate=False)

    def with_scores(self, scores) -> "QuerySet":
        """Same queries, new class-agnostic scores (class scores are dropped)."""
        return QuerySet(self.boxes, scores, self.levels, self.ids, None, self.meta, validate=False)

    def score_order(self) -> np.ndarray:
        """Indices by descending score; equal scores go to the lower id."""
        return np.lexsort((self.ids, -self.scores))


def topk_per_level(qs: QuerySet, k: int = DEFAULT_TOPK) -> QuerySet:
    """Keep the ``k`` best-scored queries of every level, levels in order."""
    if k < 1:
        raise QueryError(f"k must be >= 1, got {k}")
    order = qs.score_order()
    parts = []
    for lv in np.unique(qs.levels):
        parts.append(order[qs.levels[order] == lv][:k])
    if not parts:
        return qs.take(np.empty(0, dtype=np.int64))
    return qs.take(np.concatenate(parts))


def distinct_query_selection(qs: QuerySet, iou_thresh: float = FCN_THRESH) -> QuerySet:
    """Class-agnostic greedy NMS.

    A query is dropped when its IoU with an already kept, higher-ranked query
    is strictly greater than ``iou_thresh``. Survivors come back in descending
    score order.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise QueryError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    if len(qs) == 0:
        return qs.take(np.empty(0, dtype=np.int64))
    keep = _kernels.nms(qs.boxes, qs.score_order(), iou_thresh)
    return qs.take(keep)


def duplicate_pair_fraction(qs: QuerySet, iou_thresh: float = FCN_THRESH) -> float:
    """Fraction of unordered query pairs whose boxes overlap above ``iou_thresh``."""
    n = len(qs)
    if n < 2:
        return 0.0
    return _kernels.count_pairs_above(qs.boxes, iou_thresh) / (n * (n - 1) / 2)

