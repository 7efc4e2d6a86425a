import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from oracles import micro_scene
from ddq.metrics import (Detection, Detections, GroundTruths, MetricError, average_precision, evaluate,
                         greedy_match, mean_ap, miss_rate_curve, mmr, recall_at_k)


def test_matching_examples():
    gts = [[0, 0, 10, 10], [20, 20, 30, 30]]
    assert greedy_match(Detections(gts, [1.0, 1.0]), gts).tolist() == [True, True]
    assert greedy_match(Detections(np.empty((0, 4)), []), gts).size == 0
    flags = greedy_match(Detections([[0, 0, 10, 9], [0, 0, 10, 10]], [0.6, 0.9]), [[0, 0, 10, 10]])
    assert flags.tolist() == [False, True]


def test_ap_examples():
    gts = [[0, 0, 10, 10], [20, 20, 30, 30]]
    assert average_precision(Detections(gts, [0.9, 0.8]), gts) == 1.0
    assert average_precision(Detections([[50, 50, 60, 60]], [0.9]), gts) == 0.0
    dets = [Detection((0, 0, 10, 10), 0.9), Detection((40, 40, 50, 50), 0.8)]
    assert average_precision(dets, [[0, 0, 10, 10]]) == 1.0


def test_ap_zero_gt_convention():
    empty = GroundTruths(np.empty((0, 4)))
    assert average_precision(Detections(np.empty((0, 4)), []), empty) == 1.0
    assert average_precision(Detections([[0, 0, 1, 1]], [0.5]), empty) == 0.0


def test_recall_examples():
    gts = [[0, 0, 10, 10], [20, 20, 30, 30]]
    assert recall_at_k(Detections(gts, [0.9, 0.8]), gts, 5) == 1.0
    assert recall_at_k(Detections([[0, 0, 10, 10], [20, 20, 30, 30]], [0.9, 0.8]), gts, 1) == 0.5
    g3 = gts + [[40, 40, 50, 50]]
    d = Detections([[0, 0, 10, 10], [20, 20, 30, 30], [40, 40, 50, 50]], [0.9, 0.8, 0.1])
    assert recall_at_k(d, g3, 2) == pytest.approx(2 / 3)
    assert recall_at_k(d, GroundTruths(np.empty((0, 4))), 1) == 1.0
    with pytest.raises(MetricError):
        recall_at_k(d, g3, 0)


def test_mmr_examples():
    gts = [[0, 0, 10, 10]]
    assert mmr(Detections(gts, [0.9]), gts) == pytest.approx(1e-4)
    assert mmr(Detections(np.empty((0, 4)), []), gts, n_images=1) == 1.0
    d = Detections([[0, 0, 10, 10], [40, 40, 50, 50]], [0.9, 0.8])
    assert mmr(d, gts) == pytest.approx(1e-4)
    with pytest.raises(MetricError):
        mmr(d, GroundTruths(np.empty((0, 4))))


def test_miss_rate_curve_groups_ties():
    d = Detections([[0, 0, 10, 10], [40, 40, 50, 50]], [0.5, 0.5])
    fppi, mr = miss_rate_curve(d, [[0, 0, 10, 10]])
    assert fppi.tolist() == [0.0, 1.0] and mr.tolist() == [1.0, 0.0]


def test_metrics_vs_bruteforce_oracle(backend):
    rng = np.random.default_rng(11)
    for _ in range(200):
        boxes, scores, imgs, gts, gimg, n_img = micro_scene(rng)
        d, g = Detections(boxes, scores, imgs), GroundTruths(gts, gimg)
        args = ([tuple(b) for b in boxes], scores.tolist(), imgs.tolist(), [tuple(b) for b in gts], gimg.tolist())
        for thr in (0.5, 0.75):
            assert abs(average_precision(d, g, thr) - oracles.average_precision(*args, thr)) <= 1e-9
        for k in (1, 2, 100):
            assert abs(recall_at_k(d, g, k) - oracles.recall_at_k(*args, k)) <= 1e-9
        if len(gts):
            assert abs(mmr(d, g, n_img) - oracles.mmr(*args, n_img)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    boxes, scores, imgs, gts, gimg, n_img = micro_scene(rng)
    d, g = Detections(boxes, scores, imgs), GroundTruths(gts, gimg)
    ar = [recall_at_k(d, g, k) for k in (1, 2, 3, 5, 100)]
    assert all(a <= b for a, b in zip(ar, ar[1:]))
    ap = average_precision(d, g)
    # strictly monotone score transform
    assert average_precision(Detections(boxes, scores ** 3 * 0.5, imgs), g) == ap
    assert 0.0 <= mean_ap(d, g) <= ap + 1e-12 or len(gts) == 0
    if len(gts):
        extra = Detections(np.vstack([boxes, [[0, 0, 5, 5]]]), np.append(scores, 0.3), np.append(imgs, 0))
        assert recall_at_k(extra, g, 10**6) >= recall_at_k(d, g, 10**6)


def test_mmr_drops_when_fp_demoted():
    gts = [[0, 0, 10, 10], [20, 0, 30, 10]]
    boxes = [[0, 0, 10, 10], [20, 0, 30, 10], [50, 50, 60, 60]]
    hi = mmr(Detections(boxes, [0.7, 0.5, 0.9]), gts, n_images=50)
    lo = mmr(Detections(boxes, [0.7, 0.5, 0.1]), gts, n_images=50)
    assert lo <= hi


def test_evaluate_report():
    gts = [[0, 0, 10, 10], [20, 20, 30, 30]]
    rep = evaluate(Detections(gts + [[50, 50, 60, 60]], [0.9, 0.8, 0.1]), gts, ks=(1, 2))
    assert (rep.tp, rep.fp, rep.fn) == (2, 1, 0)
    assert rep.recall_at == {1: 0.5, 2: 1.0}
    assert rep.ap50 == 1.0
    row = rep.as_row()
    assert list(row) == ["ap50", "map", "ar1", "ar2", "mmr", "tp", "fp", "fn"]
    none = evaluate(Detections(np.empty((0, 4)), []), GroundTruths(np.empty((0, 4))))
    assert none.flags == {"no_ground_truth": True}
