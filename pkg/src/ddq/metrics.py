"""Detection metrics: AP (101-point), COCO mAP, AR@k and log-average miss rate.

Detections and ground truths may span several images; every function matches
within an image and aggregates over all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import as_boxes, box_iou

COCO_IOUS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
FPPI_REFS = np.logspace(-2.0, 0.0, 9)
MR_FLOOR = 1e-4


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    box: tuple
    score: float
    image_id: int = 0


@dataclass
class Detections:
    boxes: np.ndarray
    scores: np.ndarray
    image_ids: np.ndarray = None

    def __post_init__(self):
        self.boxes = as_boxes(self.boxes)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(len(self.boxes))
        if self.image_ids is None:
            self.image_ids = np.zeros(len(self.boxes), dtype=np.int64)
        self.image_ids = np.asarray(self.image_ids, dtype=np.int64).reshape(len(self.boxes))

    def __len__(self):
        return len(self.scores)

    @classmethod
    def from_list(cls, dets: Sequence[Detection]) -> "Detections":
        return cls([tuple(d.box) for d in dets], [d.score for d in dets], [d.image_id for d in dets])

    def take(self, idx):
        return Detections(self.boxes[idx], self.scores[idx], self.image_ids[idx])


@dataclass
class GroundTruths:
    boxes: np.ndarray
    image_ids: np.ndarray = None

    def __post_init__(self):
        self.boxes = as_boxes(self.boxes)
        if self.image_ids is None:
            self.image_ids = np.zeros(len(self.boxes), dtype=np.int64)
        self.image_ids = np.asarray(self.image_ids, dtype=np.int64).reshape(len(self.boxes))

    def __len__(self):
        return len(self.boxes)


@dataclass
class EvalReport:
    ap50: float
    map: float
    recall_at: Dict[int, float]
    mmr: float
    tp: int
    fp: int
    fn: int
    flags: Dict[str, bool] = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {"ap50": self.ap50, "map": self.map}
        for k in sorted(self.recall_at):
            row[f"ar{k}"] = self.recall_at[k]
        row.update(mmr=self.mmr, tp=self.tp, fp=self.fp, fn=self.fn)
        return row


def _dets(d) -> Detections:
    if isinstance(d, Detections):
        return d
    d = list(d)
    if not d:
        return Detections(np.empty((0, 4)), np.empty(0))
    return Detections.from_list(d)


def _gts(g) -> GroundTruths:
    if isinstance(g, GroundTruths):
        return g
    return GroundTruths(g)


def _score_order(scores):
    return np.argsort(-np.asarray(scores), kind="stable")


def _match(dets: Detections, gts: GroundTruths, iou_thresh: float):
    """Matched gt index (into ``gts``) per detection, -1 for false positives."""
    matched = np.full(len(dets), -1, dtype=np.int64)
    order = _score_order(dets.scores)
    for img in np.unique(dets.image_ids):
        d_idx = order[dets.image_ids[order] == img]
        g_idx = np.flatnonzero(gts.image_ids == img)
        if len(g_idx) == 0:
            continue
        ious = box_iou(dets.boxes[d_idx], gts.boxes[g_idx])
        m = _kernels.greedy_match(ious, iou_thresh)
        hit = m >= 0
        matched[d_idx[hit]] = g_idx[m[hit]]
    return matched


def greedy_match(dets, gts, iou_thresh: float = 0.5) -> np.ndarray:
    """True-positive flags, aligned with the input detection order.

    Detections are visited by descending score and each takes the unmatched
    ground truth of highest IoU, provided that IoU reaches ``iou_thresh``.
    """
    return _match(_dets(dets), _gts(gts), iou_thresh) >= 0


def _pr_curve(tp_sorted, n_gt):
    ctp = np.cumsum(tp_sorted)
    cfp = np.cumsum(~tp_sorted)
    recall = ctp / n_gt
    precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).tiny)
    return recall, precision


def average_precision(dets, gts, iou_thresh: float = 0.5) -> float:
    """Area under the 101-point interpolated precision/recall curve."""
    dets, gts = _dets(dets), _gts(gts)
    if len(gts) == 0:
        return 1.0 if len(dets) == 0 else 0.0
    if len(dets) == 0:
        return 0.0
    order = _score_order(dets.scores)
    tp = _match(dets, gts, iou_thresh)[order] >= 0
    recall, precision = _pr_curve(tp, len(gts))
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.zeros(len(RECALL_POINTS))
    ok = idx < len(recall)
    q[ok] = envelope[idx[ok]]
    return float(q.mean())


def mean_ap(dets, gts, iou_thresholds=COCO_IOUS) -> float:
    dets, gts = _dets(dets), _gts(gts)
    return float(np.mean([average_precision(dets, gts, t) for t in iou_thresholds]))


def recall_at_k(dets, gts, k: int, iou_thresh: float = 0.5) -> float:
    """Recall using at most ``k`` top-scored detections per image."""
    if k < 1:
        raise MetricError(f"k must be >= 1, got {k}")
    dets, gts = _dets(dets), _gts(gts)
    if len(gts) == 0:
        return 1.0
    order = _score_order(dets.scores)
    keep = []
    for img in np.unique(dets.image_ids):
        keep.append(order[dets.image_ids[order] == img][:k])
    if not keep:
        return 0.0
    top = dets.take(np.concatenate(keep))
    return float(np.count_nonzero(_match(top, gts, iou_thresh) >= 0) / len(gts))


def miss_rate_curve(dets, gts, n_images: Optional[int] = None, iou_thresh: float = 0.5):
    """FPPI and miss rate at every distinct score threshold, loosest last.

    The first point is the empty detection set (FPPI 0, miss rate 1).
    """
    dets, gts = _dets(dets), _gts(gts)
    if len(gts) == 0:
        raise MetricError("miss rate is undefined without ground truths")
    if n_images is None:
        n_images = len(np.union1d(np.unique(gts.image_ids), np.unique(dets.image_ids)))
    if n_images < 1:
        raise MetricError("need at least one image")
    order = _score_order(dets.scores)
    tp = _match(dets, gts, iou_thresh)[order] >= 0
    scores = dets.scores[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    # only cut where the score changes: tied detections enter together
    last_of_group = np.ones(len(scores), dtype=bool)
    last_of_group[:-1] = scores[1:] != scores[:-1]
    fppi = np.concatenate([[0.0], cfp[last_of_group] / n_images])
    mr = np.concatenate([[1.0], 1.0 - ctp[last_of_group] / len(gts)])
    return fppi, mr


def mmr(dets, gts, n_images: Optional[int] = None, iou_thresh: float = 0.5) -> float:
    """Log-average miss rate over FPPI in [1e-2, 1e0] (9 log-spaced points)."""
    fppi, mr = miss_rate_curve(dets, gts, n_images, iou_thresh)
    picked = []
    for ref in FPPI_REFS:
        ok = np.flatnonzero(fppi <= ref)
        picked.append(mr[ok[-1]] if ok.size else 1.0)
    picked = np.maximum(np.asarray(picked), MR_FLOOR)
    return float(np.exp(np.mean(np.log(picked))))


def evaluate(dets, gts, ks=(100, 200, 300), n_images: Optional[int] = None) -> EvalReport:
    dets, gts = _dets(dets), _gts(gts)
    flags = {}
    if len(gts) == 0:
        flags["no_ground_truth"] = True
        mmr_value = float("nan")
    else:
        mmr_value = mmr(dets, gts, n_images)
    matched = _match(dets, gts, 0.5)
    tp = int(np.count_nonzero(matched >= 0))
    return EvalReport(
        ap50=average_precision(dets, gts, 0.5),
        map=mean_ap(dets, gts),
        recall_at={k: recall_at_k(dets, gts, k) for k in ks},
        mmr=mmr_value,
        tp=tp,
        fp=len(dets) - tp,
        fn=len(gts) - tp,
        flags=flags,
    )
