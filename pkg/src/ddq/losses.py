"""Classification and box losses, and the duplicated-query gradient analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import aligned_giou, aligned_iou, giou

EPS = 1e-7
QFL_BETA = 2.0
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class LossWeights:
    w_giou: float = 2.0
    w_cls: float = 1.0

    def __post_init__(self):
        if self.w_giou < 0 or self.w_cls < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class GradientRatioReport:
    p: float
    alpha: float
    fd_alpha: float
    regime: str  # suppressed | zero | negative-training


def _clamp(p):
    return np.clip(p, EPS, 1 - EPS)


def bce(p, y):
    p = _clamp(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    out = -y * np.log(p) - (1 - y) * np.log(1 - p)
    return out if out.ndim else float(out)


def qfocal(p, y, beta: float = QFL_BETA):
    """Quality focal loss: BCE against a soft target, scaled by ``|y - p|**beta``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scale = np.abs(y - p) ** beta
    out = scale * bce(p, y)
    return out if np.ndim(out) else float(out)


def giou_loss(a, b) -> float:
    return 1.0 - giou(a, b)


def giou_loss_pairs(boxes, targets) -> np.ndarray:
    """Elementwise ``1 - giou`` over aligned rows of two ``(N, 4)`` arrays."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) == 0:
        return np.zeros(0)
    return 1.0 - aligned_giou(boxes, targets)


def duplicated_pair_loss(p1, p2):
    """Loss of two identical queries where only the first one is labelled positive."""
    p1 = _clamp(np.asarray(p1, dtype=np.float64))
    p2 = _clamp(np.asarray(p2, dtype=np.float64))
    out = -np.log(p1) - np.log(1 - p2)
    return out if out.ndim else float(out)


def single_query_loss(p):
    return bce(p, 1.0)


def _central_diff(f, p, h):
    return (f(p + h) - f(p - h)) / (2 * h)


def gradient_ratio(p: float, h: float = 1e-6) -> GradientRatioReport:
    """How much a duplicate scales the gradient of a positive query.

    The closed form ``1 - p / (1 - p)`` is reported together with a central
    finite-difference estimate of ``(dL1/dp) / (dL0/dp)``.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    alpha = 1.0 - p / (1.0 - p)
    h = min(h, p / 4, (1 - p) / 4)
    d1 = _central_diff(lambda x: duplicated_pair_loss(x, x), p, h)
    d0 = _central_diff(single_query_loss, p, h)
    fd = d1 / d0
    if abs(alpha) <= ZERO_TOL:
        regime = "zero"
    elif alpha < 0:
        regime = "negative-training"
    else:
        regime = "suppressed"
    return GradientRatioReport(p, alpha, fd, regime)


def main_cls_targets(n_queries: int, pos_index, pos_boxes, pos_gt_boxes, hard: bool = False) -> np.ndarray:
    """Classification targets of the selected queries under one-to-one assignment.

    Positives at ``pos_index`` get the IoU with their ground truth (or 1 when
    ``hard``); every other query gets 0.
    """
    t = np.zeros(n_queries)
    idx = np.asarray(pos_index, dtype=np.int64)
    if idx.size:
        t[idx] = 1.0 if hard else aligned_iou(pos_boxes, pos_gt_boxes)
    return t


def main_loss(probs, cls_targets, pos_boxes, pos_gt_boxes, weights: LossWeights = LossWeights(),
              beta: float = QFL_BETA) -> float:
    """GIoU over positives plus quality focal over every selected query."""
    reg = giou_loss_pairs(pos_boxes, pos_gt_boxes).sum()
    cls = np.sum(qfocal(probs, cls_targets, beta))
    return float(weights.w_giou * reg + weights.w_cls * cls)


def aux_loss(probs, soft_targets, boxes, matched_gt_boxes, weights: LossWeights = LossWeights(),
             beta: float = QFL_BETA) -> float:
    """Auxiliary dense-query loss; the GIoU term is reweighted by the soft target."""
    t = np.asarray(soft_targets, dtype=np.float64)
    cls = np.sum(qfocal(probs, t, beta))
    pos = t > 0
    reg = 0.0
    if np.any(pos):
        reg = float(np.sum(t[pos] * giou_loss_pairs(np.asarray(boxes)[pos], np.asarray(matched_gt_boxes)[pos])))
    return float(weights.w_giou * reg + weights.w_cls * cls)
