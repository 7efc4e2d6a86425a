import itertools

import numpy as np
import pytest

from ddq.assignment import (CostWeights, InfeasibleAssignmentError, SchemaError, cost_matrix, hungarian,
                            match_cost, one_to_one_assign, soft_one_to_many_assign, soft_targets_for_group)
from ddq.geometry import Box
from ddq.selection import Query, QuerySet


def brute_min(cost):
    G, Q = cost.shape
    best = np.inf
    for perm in itertools.permutations(range(Q), G):
        best = min(best, sum(float(cost[g, q]) for g, q in enumerate(perm)))
    return best


def test_match_cost_examples():
    w = CostWeights(1, 5, 2)
    assert match_cost(Query(Box(0, 0, 2, 2), 1.0), ((0, 0, 2, 2), None), w) == pytest.approx(-3.0)
    assert match_cost(Query(Box(0, 0, 2, 2), 0.0), ((0, 0, 2, 2), None), w) == pytest.approx(-2.0)
    v = match_cost(Query(Box(0, 0, 2, 2), 0.5), ((1, 1, 3, 3), None), w, image_diag=10)
    assert v == pytest.approx(-0.5 + 5 * 0.4 + 2 * 5 / 63, abs=1e-12)


def test_class_cost_uses_gt_class():
    q = Query(Box(0, 0, 2, 2), 0.8, class_scores=(0.8, 0.3))
    assert match_cost(q, ((0, 0, 2, 2), 1)) == pytest.approx(-0.3 - 2.0)
    with pytest.raises(SchemaError):
        match_cost(Query(Box(0, 0, 2, 2), 0.8), ((0, 0, 2, 2), 0))


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(0, 0, 0)
    with pytest.raises(ValueError):
        CostWeights(cls_cost="bogus")


def test_hungarian_examples(backend):
    r = hungarian([[3.0]])
    assert r.pairs.tolist() == [[0, 0]] and r.total_cost == 3
    r = hungarian([[1.0, 2.0], [2.0, 4.0]])
    assert sorted(map(tuple, r.pairs.tolist())) == [(0, 1), (1, 0)] and r.total_cost == 4
    r = hungarian([[5.0, 1.0, 9.0], [1.0, 9.0, 9.0]])
    assert sorted(map(tuple, r.pairs.tolist())) == [(0, 1), (1, 0)] and r.total_cost == 2
    assert r.negatives.tolist() == [2]


def test_hungarian_errors():
    with pytest.raises(InfeasibleAssignmentError):
        hungarian(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        hungarian([[np.inf]])


def test_hungarian_empty_rows():
    r = hungarian(np.zeros((0, 4)))
    assert r.pairs.shape == (0, 2) and r.negatives.tolist() == [0, 1, 2, 3]


def test_hungarian_random_vs_bruteforce(backend):
    rng = np.random.default_rng(5)
    for _ in range(200):
        G = int(rng.integers(1, 6))
        Q = int(rng.integers(G, 7))
        c = rng.uniform(-10, 10, (G, Q))
        if rng.uniform() < 0.3:
            c = np.round(c)  # ties
        assert hungarian(c).total_cost == brute_min(c)


def _scene_queries(rng, G=4, Q=60):
    gts = rng.uniform(0, 80, (G, 2))
    gts = np.concatenate([gts, gts + rng.uniform(10, 30, (G, 2))], axis=1)
    xy = rng.uniform(0, 100, (Q, 2))
    boxes = np.concatenate([xy, xy + rng.uniform(5, 30, (Q, 2))], axis=1)
    return QuerySet(boxes, rng.uniform(size=Q), ids=rng.permutation(Q) + 100), gts


def test_one_to_one_invariants_and_pruning_is_exact(backend):
    rng = np.random.default_rng(2)
    for _ in range(30):
        qs, gts = _scene_queries(rng)
        r = one_to_one_assign(qs, gts, image_diag=100)
        full = hungarian(cost_matrix(qs, gts, image_diag=100), qs.ids)
        assert r.total_cost == pytest.approx(full.total_cost, abs=1e-9)
        assert sorted(r.pairs[:, 0].tolist()) == list(range(len(gts)))
        assert len(set(r.pairs[:, 1].tolist())) == len(gts)
        assert set(r.positives) | set(r.negatives) == set(qs.ids.tolist())
        assert not set(r.positives) & set(r.negatives)


def test_one_to_one_perfect_queries_win():
    gts = np.array([[0, 0, 10, 10], [20, 20, 30, 30.0]])
    boxes = np.array([[1, 1, 12, 9], [20, 20, 30, 30], [0, 0, 10, 10], [19, 21, 30, 28.0]])
    qs = QuerySet(boxes, [0.5, 1.0, 1.0, 0.5])
    r = one_to_one_assign(qs, gts)
    assert r.query_for_gt() == {0: 2, 1: 1}


def test_one_to_one_edge_cases():
    qs = QuerySet([[0, 0, 1, 1], [0, 0, 2, 2]], [0.3, 0.4])
    r = one_to_one_assign(qs, np.empty((0, 4)))
    assert r.positives.size == 0 and r.negatives.tolist() == [0, 1]
    with pytest.raises(InfeasibleAssignmentError):
        one_to_one_assign(qs, [[0, 0, 1, 1]] * 3)


def test_one_to_one_partial():
    qs = QuerySet([[0, 0, 1, 1]], [0.3])
    r = one_to_one_assign(qs, [[5, 5, 6, 6], [0, 0, 1, 1], [9, 9, 10, 10]], partial=True)
    assert r.pairs.tolist() == [[1, 0]]
    assert r.positives.tolist() == [0]


def test_hand_cost_matrix_matches_example():
    # 3 queries, 2 gts: the matching from the 2x3 hungarian example
    c = np.array([[5.0, 1.0, 9.0], [1.0, 9.0, 9.0]])
    assert hungarian(c, [10, 11, 12]).query_for_gt() == {0: 11, 1: 10}


def test_soft_target_examples():
    assert soft_targets_for_group([1.0], [0.6]).tolist() == [0.6]
    t = soft_targets_for_group([0.9, 0.5], [0.5, 0.8])
    np.testing.assert_allclose(t, [0.0140625 / 0.131072 * 0.8, 0.8], atol=1e-12)
    assert soft_targets_for_group([0.9, 0.5], [0.0, 0.0]).tolist() == [0.0, 0.0]


def test_soft_one_to_many():
    rng = np.random.default_rng(3)
    qs, gts = _scene_queries(rng, G=3, Q=50)
    st = soft_one_to_many_assign(qs, gts, K=8, image_diag=100)
    assert np.count_nonzero(st.targets > 0) <= 3 * 8
    assert np.all(st.targets >= 0) and st.targets.max() <= 1.0
    assert st.ids.tolist() == qs.ids.tolist()
    with pytest.raises(ValueError):
        soft_one_to_many_assign(qs, gts, K=0)
