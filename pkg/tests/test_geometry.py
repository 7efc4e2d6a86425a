import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddq.geometry import (Box, GeometryError, aligned_giou, area, box_giou, box_iou, cxcywh_to_xyxy,
                          giou, iou, xyxy_to_cxcywh)

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, min_side=0.0):
    x1, y1 = draw(coord), draw(coord)
    w = draw(st.floats(min_side, 40))
    h = draw(st.floats(min_side, 40))
    return (x1, y1, x1 + w, y1 + h)


@pytest.mark.parametrize("b, expected", [([0, 0, 2, 2], 4.0), ([1, 1, 1, 5], 0.0), ([0, 0, 3, 7], 21.0)])
def test_area(b, expected):
    assert area(b) == expected


def test_box_rejects_inverted_and_nonfinite():
    with pytest.raises(GeometryError):
        Box(2, 0, 1, 1)
    with pytest.raises(GeometryError):
        Box(0, 0, float("nan"), 1)


def test_iou_examples():
    assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert iou([0, 0, 1, 1], [5, 5, 6, 6]) == 0.0
    assert iou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 / 7, abs=1e-15)


def test_iou_of_degenerate_boxes_is_zero():
    assert iou([1, 1, 1, 1], [1, 1, 1, 1]) == 0.0
    assert iou([0, 0, 0, 5], [0, 0, 2, 2]) == 0.0


def test_giou_examples():
    assert giou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert giou([0, 0, 1, 1], [2, 0, 3, 1]) == pytest.approx(-1 / 3, abs=1e-15)
    assert giou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(-5 / 63, abs=1e-15)


def test_giou_both_degenerate_raises():
    with pytest.raises(GeometryError):
        giou([0, 0, 0, 0], [1, 1, 1, 3])


def test_giou_one_degenerate_is_defined():
    # IoU 0, hull 2x2 = 4, union 1 -> -(4 - 1)/4
    assert giou([0, 0, 1, 1], [2, 2, 2, 2]) == pytest.approx(-0.75)


@settings(max_examples=300, deadline=None)
@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)


@settings(max_examples=300, deadline=None)
@given(boxes(min_side=0.5), boxes(min_side=0.5))
def test_giou_bounds(a, b):
    g = giou(a, b)
    assert -1.0 < g <= iou(a, b) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(boxes(min_side=0.5), min_size=1, max_size=6), st.lists(boxes(min_side=0.5), min_size=1, max_size=6))
def test_array_forms_match_scalar(a, b):
    m = box_iou(a, b)
    g = box_giou(a, b)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            assert m[i, j] == pytest.approx(iou(x, y), abs=1e-12)
            assert g[i, j] == pytest.approx(giou(x, y), abs=1e-12)
    k = min(len(a), len(b))
    np.testing.assert_allclose(aligned_giou(a[:k], b[:k]), np.diag(g)[:k], atol=1e-12)


def test_box_helpers():
    b = Box.from_cxcywh(1, 1, 2, 4)
    assert b.as_tuple() == (0, -1, 2, 3)
    assert (b.width, b.height) == (2, 4)
    xyxy = np.array([[0.0, -1, 2, 3]])
    np.testing.assert_array_equal(cxcywh_to_xyxy(xyxy_to_cxcywh(xyxy)), xyxy)
    assert math.isclose(area(b), 8.0)
