"""Desk-scale experiments built on the scene/query simulator.

Each experiment is a pure function of its configuration and seed list and
returns an ExperimentReport whose CSV rendering is byte-stable. Seeds are
evaluated in a thread pool (``DDQ_THREADS`` caps its size); results are
merged in seed order so the pool size never changes the output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..assignment import CostWeights
from ..losses import gradient_ratio
from ..metrics import Detections, GroundTruths, evaluate, recall_at_k
from ..selection import QuerySet, distinct_query_selection, topk_per_level
from .queries import PyramidConfig, QueryNoiseModel, generate_dense_queries, generate_sparse_queries, subsample_queries
from .rng import child_seed
from .scene import Scene, SceneConfig, generate_scene
from .toy import TrainConfig, train_toy

DISCLAIMER = ("synthetic noise-model simulation; numbers show qualitative trends only "
              "and are not detector accuracy")
DEFAULT_P_GRID = tuple(round(0.01 * k, 2) for k in range(1, 100))
NONE = "none"  # threshold sentinel: DQS disabled


def _fmt(x) -> str:
    if x is None:
        return NONE
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    s = str(x)
    if any(c in s for c in ",\n\r\""):
        raise ValueError(f"CSV field may not contain separators: {s!r}")
    return s


@dataclass
class ExperimentReport:
    name: str
    columns: List[str]
    rows: List[tuple] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    notes: List[str] = field(default_factory=lambda: [DISCLAIMER])
    extra: Dict[str, "ExperimentReport"] = field(default_factory=dict)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(self.columns)}")
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(_fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def n_threads() -> int:
    raw = os.environ.get("DDQ_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DDQ_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"DDQ_THREADS must be a positive integer, got {raw!r}")
    return n


def _map(fn: Callable, items: Sequence) -> list:
    items = list(items)
    workers = min(n_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_seeds(seeds):
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    return seeds


def make_scenes(scene_cfg: SceneConfig, seed: int, n: int) -> List[Scene]:
    """``n`` scenes whose seeds derive from ``(seed, index)``."""
    return [generate_scene(replace(scene_cfg, seed=child_seed(seed, j))) for j in range(n)]


def _stats(values):
    v = np.asarray(values, dtype=np.float64)
    sd = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return float(np.mean(v)), sd, float(np.median(v))


def _gt(scenes):
    return GroundTruths(np.concatenate([s.boxes for s in scenes]).reshape(-1, 4),
                        np.concatenate([np.full(len(s.boxes), i) for i, s in enumerate(scenes)]))


def _dets(sets: Sequence[QuerySet]):
    return Detections(np.concatenate([q.boxes for q in sets]).reshape(-1, 4),
                      np.concatenate([q.scores for q in sets]),
                      np.concatenate([np.full(len(q), i) for i, q in enumerate(sets)]))


def dense_pipeline(qs: QuerySet, thresh: Optional[float], topk: Optional[int]) -> QuerySet:
    """Per-level top-k on the raw scores followed by optional DQS."""
    if topk:
        qs = topk_per_level(qs, topk)
    if thresh is not None:
        qs = distinct_query_selection(qs, thresh)
    return qs


def run_gradient_demo(p_grid: Sequence[float] = DEFAULT_P_GRID) -> ExperimentReport:
    rep = ExperimentReport("gradient-demo", ["p", "alpha", "fd_alpha", "regime"])
    for p in p_grid:
        r = gradient_ratio(float(p))
        rep.add(r.p, r.alpha, r.fd_alpha, r.regime)
    return rep


_TOY_COLUMNS = ["seed", "dqs", "dqs_thresh", "n_queries", "steps_to_target", "final_recall",
                "final_precision", "final_ap50", "final_loss", "grad_check_max_rel_err",
                "grad_checks", "status"]


def run_toy_training(scene_cfg: SceneConfig, seeds: Sequence[int], with_dqs=(True, False),
                     dqs_thresh: float = 0.7, train_cfg: TrainConfig = TrainConfig(),
                     noise: QueryNoiseModel = QueryNoiseModel(),
                     pyramid_cfg: PyramidConfig = PyramidConfig(),
                     cost: CostWeights = CostWeights(), n_queries: Optional[int] = None) -> ExperimentReport:
    """Toy head training per seed and DQS mode; the step curves go to ``extra['curve']``."""
    seeds = _check_seeds(seeds)
    modes = [bool(with_dqs)] if isinstance(with_dqs, (bool, np.bool_)) else [bool(m) for m in with_dqs]

    def one(seed):
        scenes = make_scenes(scene_cfg, seed, train_cfg.n_scenes)
        qsets = [generate_dense_queries(s, pyramid_cfg, noise) for s in scenes]
        if n_queries is not None:
            qsets = [subsample_queries(q, n_queries, seed) for q in qsets]
        return [train_toy(scenes, qsets, m, dqs_thresh, train_cfg, seed, cost) for m in modes], qsets

    rep = ExperimentReport("train-toy", _TOY_COLUMNS, seeds=seeds)
    curve = ExperimentReport("train-toy-curve", ["seed", "dqs", "step", "loss", "recall", "precision"],
                             seeds=seeds)
    for seed, (runs, qsets) in zip(seeds, _map(one, seeds)):
        for r in runs:
            rep.add(seed, r.with_dqs, r.dqs_thresh, sum(len(q) for q in qsets), r.steps_to_target,
                    r.final_recall, r.final_precision, r.final_ap50, r.loss[-1],
                    r.grad_check_max_rel_err, r.grad_checks_done, r.status)
            for step, (lo, rc, pr) in enumerate(zip(r.loss, r.recall, r.precision)):
                curve.add(seed, r.with_dqs, step, lo, rc, pr)
    rep.extra["curve"] = curve
    return rep


def run_query_sweep(scene_cfg: SceneConfig, seeds: Sequence[int], query_counts: Sequence[int],
                    dqs_thresh: float = 0.7, train_cfg: TrainConfig = TrainConfig(),
                    noise: QueryNoiseModel = QueryNoiseModel(),
                    pyramid_cfg: PyramidConfig = PyramidConfig(),
                    cost: CostWeights = CostWeights()) -> ExperimentReport:
    """Final toy-training recall against the number of queries, with and without DQS.

    Each count draws a nested random subset of the dense queries of every
    scene, so a larger count only ever adds queries.
    """
    seeds = _check_seeds(seeds)
    counts = [int(c) for c in query_counts]
    if not counts or min(counts) < 1:
        raise ValueError("query_counts must be a non-empty list of positive integers")

    def one(seed):
        scenes = make_scenes(scene_cfg, seed, train_cfg.n_scenes)
        full = [generate_dense_queries(s, pyramid_cfg, noise) for s in scenes]
        out = {}
        for c in counts:
            qsets = [subsample_queries(q, c, seed) for q in full]
            for m in (True, False):
                r = train_toy(scenes, qsets, m, dqs_thresh, train_cfg, seed, cost)
                out[c, m] = (r.final_recall, r.final_ap50, r.steps_to_target)
        return out

    per_seed = _map(one, seeds)
    rep = ExperimentReport("query-sweep", ["n_queries", "dqs", "recall_mean", "recall_sd", "recall_median",
                                           "ap50_mean", "ap50_median", "steps_to_target_median"], seeds=seeds)
    for c in counts:
        for m in (True, False):
            rec = [s[c, m][0] for s in per_seed]
            ap = [s[c, m][1] for s in per_seed]
            stt = float(np.median([s[c, m][2] for s in per_seed]))
            rep.add(c, m, *_stats(rec), float(np.mean(ap)), float(np.median(ap)), stt)
    return rep


def run_threshold_sweep(scene_cfg: SceneConfig, seeds: Sequence[int], thresholds: Sequence,
                        topk: Optional[int] = 1000, train_cfg: TrainConfig = TrainConfig(),
                        noise: QueryNoiseModel = QueryNoiseModel(),
                        pyramid_cfg: PyramidConfig = PyramidConfig(),
                        cost: CostWeights = CostWeights()) -> ExperimentReport:
    """AP50 of the toy pipeline when DQS runs at each threshold (``"none"`` disables it).

    The same threshold is used during training and at evaluation.
    """
    seeds = _check_seeds(seeds)
    ths = [parse_threshold(t) for t in thresholds]
    if not ths:
        raise ValueError("thresholds must be non-empty")

    def one(seed):
        scenes = make_scenes(scene_cfg, seed, train_cfg.n_scenes)
        qsets = [dense_pipeline(generate_dense_queries(s, pyramid_cfg, noise), None, topk) for s in scenes]
        out = []
        for t in ths:
            r = train_toy(scenes, qsets, t is not None, t, train_cfg, seed, cost)
            out.append((r.final_ap50, r.final_recall))
        return out

    per_seed = _map(one, seeds)
    rep = ExperimentReport("threshold-sweep", ["dqs_thresh", "ap50_mean", "ap50_sd", "ap50_median",
                                               "recall_mean"], seeds=seeds)
    for k, t in enumerate(ths):
        ap = [s[k][0] for s in per_seed]
        rep.add(t, *_stats(ap), float(np.mean([s[k][1] for s in per_seed])))
    return rep


def parse_threshold(t):
    if t is None or (isinstance(t, str) and t.lower() == NONE):
        return None
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1] or be '{NONE}', got {t}")
    return t


def run_recall_study(scene_cfg: SceneConfig, seeds: Sequence[int], dqs_thresh: float = 0.7,
                     topk: Optional[int] = 1000, sparse_n: int = 300, ks: Sequence[int] = (100, 200, 300),
                     n_scenes: int = 2, noise: QueryNoiseModel = QueryNoiseModel(),
                     pyramid_cfg: PyramidConfig = PyramidConfig()) -> ExperimentReport:
    """AR@k at IoU 0.5 of dense queries after DQS against a fixed sparse query set."""
    seeds = _check_seeds(seeds)
    ks = [int(k) for k in ks]

    def one(seed):
        scenes = make_scenes(scene_cfg, seed, n_scenes)
        gts = _gt(scenes)
        dense = [dense_pipeline(generate_dense_queries(s, pyramid_cfg, noise), dqs_thresh, topk)
                 for s in scenes]
        sparse = [generate_sparse_queries(s, sparse_n, noise) for s in scenes]
        out = {}
        for name, sets in (("dense+dqs", dense), (f"sparse-{sparse_n}", sparse)):
            d = _dets(sets)
            out[name] = [float(np.mean([len(q) for q in sets]))] + [recall_at_k(d, gts, k) for k in ks]
        return out

    per_seed = _map(one, seeds)
    rep = ExperimentReport("recall", ["method", "queries_per_image"] + [f"ar{k}" for k in ks], seeds=seeds)
    for name in per_seed[0]:
        vals = np.mean([s[name] for s in per_seed], axis=0)
        rep.add(name, *vals)
    return rep


def run_eval(scene_cfg: SceneConfig, seeds: Sequence[int], dqs_thresh: Optional[float] = 0.7,
             topk: Optional[int] = 1000, ks: Sequence[int] = (100, 200, 300), n_scenes: int = 2,
             noise: QueryNoiseModel = QueryNoiseModel(), pyramid_cfg: PyramidConfig = PyramidConfig(),
             scene_file: Optional[str] = None) -> ExperimentReport:
    """Full metric report of the untrained dense pipeline, per seed plus a mean row.

    With ``scene_file`` the single stored scene is evaluated instead of
    generated ones.
    """
    seeds = _check_seeds(seeds)
    ks = [int(k) for k in ks]
    fixed = Scene.load(scene_file) if scene_file else None

    def one(seed):
        scenes = [fixed] if fixed is not None else make_scenes(scene_cfg, seed, n_scenes)
        sets = [dense_pipeline(generate_dense_queries(s, pyramid_cfg, noise), dqs_thresh, topk)
                for s in scenes]
        return evaluate(_dets(sets), _gt(scenes), ks, n_images=len(scenes)).as_row()

    run_seeds = seeds[:1] if fixed is not None else seeds
    rows = _map(one, run_seeds)
    cols = list(rows[0])
    rep = ExperimentReport("eval", ["seed"] + cols, seeds=run_seeds)
    for seed, row in zip(run_seeds, rows):
        rep.add(seed, *row.values())
    if len(rows) > 1:
        rep.add("mean", *[float(np.mean([r[c] for r in rows])) for c in cols])
    return rep
