"""One-to-one bipartite assignment and the auxiliary soft one-to-many targets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import as_boxes, box_giou, box_iou
from .selection import Query, QuerySet

FCN_K = 8
DETR_K = 4


class AssignmentError(ValueError):
    pass


class InfeasibleAssignmentError(AssignmentError):
    """More ground truths than queries; no injective assignment exists."""


class SchemaError(AssignmentError):
    pass


@dataclass(frozen=True)
class CostWeights:
    w_cls: float = 1.0
    w_l1: float = 5.0
    w_giou: float = 2.0
    cls_cost: str = "prob"  # or "focal"

    def __post_init__(self):
        ws = (self.w_cls, self.w_l1, self.w_giou)
        if min(ws) < 0 or max(ws) == 0:
            raise ValueError(f"cost weights must be non-negative and not all zero: {ws}")
        if self.cls_cost not in ("prob", "focal"):
            raise ValueError(f"unknown classification cost {self.cls_cost!r}")


@dataclass
class AssignmentResult:
    pairs: np.ndarray  # (G, 2) rows of (gt_index, query_id)
    positives: np.ndarray  # query ids, sorted
    negatives: np.ndarray  # query ids, sorted
    total_cost: float

    def positive_mask(self, ids) -> np.ndarray:
        return np.isin(np.asarray(ids), self.positives)

    def query_for_gt(self) -> dict:
        return {int(g): int(q) for g, q in self.pairs}


@dataclass
class SoftTargets:
    ids: np.ndarray
    targets: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        # regression weight equals the classification target
        return self.targets


def _focal_cls_cost(p, alpha=0.25, gamma=2.0, eps=1e-8):
    pos = alpha * (1 - p) ** gamma * -np.log(p + eps)
    neg = (1 - alpha) * p ** gamma * -np.log(1 - p + eps)
    return pos - neg


def _gt_probs(class_scores, scores, gt_classes, n_gt):
    """``(Q, G)`` probability of each gt's class for every query."""
    if gt_classes is None:
        return np.repeat(scores[:, None], n_gt, axis=1)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    if class_scores is None:
        raise SchemaError("ground truths carry classes but queries have no class_scores")
    if len(gt_classes) and (gt_classes.min() < 0 or gt_classes.max() >= class_scores.shape[1]):
        raise SchemaError(f"gt class outside the {class_scores.shape[1]} class scores")
    return class_scores[:, gt_classes]


def cost_matrix(qs: QuerySet, gt_boxes, gt_classes=None, w: CostWeights = CostWeights(),
                image_diag: float = 1.0) -> np.ndarray:
    """``(G, Q)`` matching cost for every (ground truth, query) pair."""
    if image_diag <= 0:
        raise ValueError("image_diag must be positive")
    gts = as_boxes(gt_boxes)
    n_gt = len(gts)
    if n_gt == 0 or len(qs) == 0:
        return np.zeros((n_gt, len(qs)))
    p = _gt_probs(qs.class_scores, qs.scores, gt_classes, n_gt).T
    if w.cls_cost == "prob":
        c_cls = -p
    else:
        c_cls = _focal_cls_cost(p)
    l1 = np.abs(gts[:, None, :] - qs.boxes[None, :, :]).sum(axis=2) / image_diag
    cost = w.w_cls * c_cls + w.w_l1 * l1
    if w.w_giou:
        cost = cost - w.w_giou * box_giou(gts, qs.boxes)
    return cost


def match_cost(query: Query, gt, w: CostWeights = CostWeights(), image_diag: float = 1.0) -> float:
    """Cost of pairing one query with one ``(box, class)`` ground truth.

    ``class`` may be None for class-agnostic matching against ``query.score``.
    """
    box, cls = gt
    qs = QuerySet.from_queries([query])
    return float(cost_matrix(qs, [tuple(np.asarray(box, dtype=float))],
                             None if cls is None else [cls], w, image_diag)[0, 0])


def _result(cost, rows, cols, query_ids):
    query_ids = np.asarray(query_ids, dtype=np.int64)
    matched = query_ids[cols]
    total = 0.0
    for r, c in zip(rows, cols):
        total += float(cost[r, c])
    pos = np.sort(matched)
    neg = np.sort(np.setdiff1d(query_ids, matched, assume_unique=True))
    return AssignmentResult(np.stack([rows, matched], axis=1).astype(np.int64).reshape(-1, 2),
                            pos, neg, total)


def hungarian(cost, query_ids: Optional[Sequence[int]] = None) -> AssignmentResult:
    """Minimum-cost injective map from the rows (gts) to the columns (queries)."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a G x Q matrix")
    G, Q = cost.shape
    if query_ids is None:
        query_ids = np.arange(Q)
    if Q < G:
        raise InfeasibleAssignmentError(f"{G} ground truths but only {Q} queries")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    cols = _kernels.linear_sum_assignment(cost)
    return _result(cost, np.arange(G), cols, query_ids)


def _candidate_columns(cost):
    # every row's optimal partner is among its G cheapest columns
    G, Q = cost.shape
    if Q <= 4 * G:
        return np.arange(Q)
    part = np.argpartition(cost, G - 1, axis=1)[:, :G]
    return np.unique(part)


def one_to_one_assign(qs: QuerySet, gt_boxes, gt_classes=None, w: CostWeights = CostWeights(),
                      image_diag: float = 1.0, partial: bool = False) -> AssignmentResult:
    """Each ground truth gets exactly one positive query; the rest are negatives.

    With fewer queries than ground truths this raises, unless ``partial`` is
    set: then every query becomes a positive and the cheapest subset of
    ground truths is matched.
    """
    gts = as_boxes(gt_boxes)
    G, Q = len(gts), len(qs)
    if G == 0 or Q == 0 and partial:
        return AssignmentResult(np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64),
                                np.sort(qs.ids), 0.0)
    if Q < G and partial:
        cost = cost_matrix(qs, gts, gt_classes, w, image_diag)
        rows = _kernels.linear_sum_assignment(np.ascontiguousarray(cost.T))
        order = np.argsort(rows)
        return _result(cost, rows[order], np.arange(Q)[order], qs.ids)
    if Q < G:
        raise InfeasibleAssignmentError(
            f"{G} ground truths but only {Q} queries survived selection; "
            "lower the DQS threshold's aggressiveness or raise k")
    cost = cost_matrix(qs, gts, gt_classes, w, image_diag)
    cand = _candidate_columns(cost)
    sub = np.ascontiguousarray(cost[:, cand])
    cols = cand[_kernels.linear_sum_assignment(sub)]
    return _result(cost, np.arange(G), cols, qs.ids)


def soft_targets_for_group(scores, ious) -> np.ndarray:
    """Soft targets of one positive set: quality-normalised, scaled to its best IoU."""
    scores = np.asarray(scores, dtype=np.float64)
    ious = np.asarray(ious, dtype=np.float64)
    quality = scores * ious ** 6
    top = quality.max() if quality.size else 0.0
    if top <= 0.0:
        return np.zeros_like(quality)
    return quality / top * ious.max()


def soft_one_to_many_assign(qs: QuerySet, gt_boxes, gt_classes=None, w: CostWeights = CostWeights(),
                            K: int = FCN_K, image_diag: float = 1.0) -> SoftTargets:
    """Soft one-to-many targets for the auxiliary head.

    Each ground truth takes its ``K`` cheapest queries as positives; a query
    that is positive for several ground truths keeps its largest target.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    gts = as_boxes(gt_boxes)
    targets = np.zeros(len(qs))
    if len(gts) == 0 or len(qs) == 0:
        return SoftTargets(qs.ids.copy(), targets)
    cost = cost_matrix(qs, gts, gt_classes, w, image_diag)
    probs = _gt_probs(qs.class_scores, qs.scores, gt_classes, len(gts))
    ious = box_iou(qs.boxes, gts)
    for g in range(len(gts)):
        members = np.argsort(cost[g], kind="stable")[:K]
        t = soft_targets_for_group(probs[members, g], ious[members, g])
        targets[members] = np.maximum(targets[members], t)
    return SoftTargets(qs.ids.copy(), targets)
