"""A linear-logistic scoring head trained under one-to-one assignment.

Boxes stay fixed at the noise model's predictions; only the classification
score is learned, so the run isolates how near-duplicate queries interact
with one-to-one labels. Each step: score queries, optionally run distinct
query selection, assign one positive per object by bipartite matching, and
take a gradient step on the binary cross-entropy of the selected queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..assignment import CostWeights, one_to_one_assign
from ..metrics import Detections, GroundTruths, average_precision, greedy_match
from ..selection import QuerySet, distinct_query_selection
from . import rng as rngmod
from .scene import Scene

PRIOR_PROB = 0.01


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    lr: float = 0.5
    n_scenes: int = 2
    target_recall: float = 0.9
    score_thresh: float = 0.5
    grad_checks: int = 10
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.n_scenes < 1:
            raise ValueError("n_scenes must be >= 1")


@dataclass
class ToyRun:
    with_dqs: bool
    dqs_thresh: Optional[float]
    loss: List[float] = field(default_factory=list)
    recall: List[float] = field(default_factory=list)
    precision: List[float] = field(default_factory=list)
    steps_to_target: float = math.inf
    grad_check_max_rel_err: float = 0.0
    grad_checks_done: int = 0
    final_ap50: float = 0.0
    weights: Optional[np.ndarray] = None
    status: str = "ok"

    @property
    def final_recall(self):
        return self.recall[-1]

    @property
    def final_precision(self):
        return self.precision[-1]


def features(qs: QuerySet) -> np.ndarray:
    """Per-query inputs: bias, noisy quality, its square, centre distance, scale gap."""
    s = qs.scores
    d = np.minimum(qs.meta["centre_dist"], 4.0) / 4.0
    g = np.minimum(qs.meta["scale_gap"], 2.0) / 2.0
    return np.stack([np.ones_like(s), s, s * s, d, g], axis=1)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _bce_logits(z, y):
    # binary cross-entropy of sigmoid(z), written on logits so it never clamps
    return np.logaddexp(0.0, z) - y * z


@dataclass
class _Problem:
    """Frozen selection and labels for one scene at one step."""
    feats: np.ndarray
    labels: np.ndarray
    norm: float

    def loss(self, w):
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported by the caller
            return float(np.sum(_bce_logits(self.feats @ w, self.labels)) / self.norm)

    def grad(self, w):
        return self.feats.T @ (_sigmoid(self.feats @ w) - self.labels) / self.norm


def _total(problems, w):
    return sum(p.loss(w) for p in problems) / len(problems)


def _total_grad(problems, w):
    return sum(p.grad(w) for p in problems) / len(problems)


def gradient_check(problems: Sequence[_Problem], w: np.ndarray, h: float = 1e-6) -> float:
    """Relative error between the analytic gradient and central differences."""
    g = _total_grad(problems, w)
    fd = np.empty_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        fd[k] = (_total(problems, w + e) - _total(problems, w - e)) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))


def _select(qs: QuerySet, probs, with_dqs, thresh):
    scored = qs.with_scores(probs)
    if not with_dqs:
        return np.arange(len(qs)), scored
    kept = distinct_query_selection(scored, thresh)
    order = np.argsort(qs.ids, kind="stable")
    return order[np.searchsorted(qs.ids[order], kept.ids)], kept


def train_toy(scenes: Sequence[Scene], query_sets: Sequence[QuerySet], with_dqs: bool,
              dqs_thresh: Optional[float] = 0.7, cfg: TrainConfig = TrainConfig(), seed: int = 0,
              cost: CostWeights = CostWeights()) -> ToyRun:
    run = ToyRun(with_dqs=with_dqs, dqs_thresh=dqs_thresh if with_dqs else None)
    for qs in query_sets:
        if len(np.unique(qs.ids)) != len(qs):
            raise ValueError("query ids must be unique")
    feats = [features(qs) for qs in query_sets]
    w = np.zeros(feats[0].shape[1])
    w[0] = math.log(PRIOR_PROB / (1 - PRIOR_PROB))
    rng = rngmod.substream(seed, rngmod.TRAIN)
    n_checks = min(cfg.grad_checks, cfg.steps)
    checkpoints = set(rng.choice(cfg.steps, size=n_checks, replace=False).tolist()) if n_checks else set()
    n_gt = sum(len(s.boxes) for s in scenes)

    for step in range(cfg.steps + 1):
        problems = []
        tp = n_det = 0
        last_dets = []
        for scene, qs, f in zip(scenes, query_sets, feats):
            probs = _sigmoid(f @ w)
            idx, sel = _select(qs, probs, with_dqs, dqs_thresh)
            confident = sel.scores > cfg.score_thresh
            n_det += int(np.count_nonzero(confident))
            if np.any(confident):
                tp += int(np.count_nonzero(greedy_match(
                    Detections(sel.boxes[confident], sel.scores[confident]), scene.boxes, 0.5)))
            if step == cfg.steps:
                last_dets.append(sel)
            result = one_to_one_assign(sel, scene.boxes, None, cost, scene.diag, partial=True)
            labels = result.positive_mask(sel.ids).astype(np.float64)
            problems.append(_Problem(f[idx], labels, max(1, len(scene.boxes))))
        loss = _total(problems, w)
        recall = tp / n_gt if n_gt else 1.0
        run.loss.append(loss)
        run.recall.append(recall)
        run.precision.append(tp / n_det if n_det else 1.0)
        if recall >= cfg.target_recall and math.isinf(run.steps_to_target):
            run.steps_to_target = step
        if not math.isfinite(loss):
            run.status = "diverged"
            break
        if step == cfg.steps:
            break
        if step in checkpoints:
            err = gradient_check(problems, w, cfg.fd_step)
            run.grad_check_max_rel_err = max(run.grad_check_max_rel_err, err)
            run.grad_checks_done += 1
        w = w - cfg.lr * _total_grad(problems, w)

    if last_dets:
        image_ids = np.concatenate([np.full(len(s), i) for i, s in enumerate(last_dets)])
        dets = Detections(np.concatenate([s.boxes for s in last_dets]),
                          np.concatenate([s.scores for s in last_dets]), image_ids)
        gt_ids = np.concatenate([np.full(len(s.boxes), i) for i, s in enumerate(scenes)])
        run.final_ap50 = average_precision(dets, GroundTruths(np.concatenate([s.boxes for s in scenes]), gt_ids))
    run.weights = w
    return run
