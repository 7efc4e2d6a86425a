import numpy as np
import pytest

from ddq.pyramid import (DEFAULT_STRIDES, FeaturePyramid, Level, PyramidError, ShuffleSpec, anchor_grid,
                         bilinear_resize, dense_anchors, dense_query_init, pyramid_shuffle)


def _marker_pyramid():
    lv = []
    for l, s in enumerate((8, 16)):
        h = w = 4 // (l + 1)
        data = np.zeros((h, w, 4))
        for ch in range(4):
            data[:, :, ch] = 10 * l + ch
        lv.append(Level(s, data))
    return FeaturePyramid(lv)


def test_resize_constants_exact():
    a = np.full((3, 5, 2), 3.5)
    for shape in [(1, 1), (7, 2), (13, 17)]:
        out = bilinear_resize(a, *shape)
        assert np.all(out == 3.5)


def test_resize_single_pixel():
    assert np.all(bilinear_resize(np.array([[[2.25]]]), 4, 4) == 2.25)


def test_resize_center_of_2x2():
    a = np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None]
    out = bilinear_resize(a, 3, 3)
    assert out[1, 1, 0] == pytest.approx(1.5, abs=1e-15)
    # corners stay put under half-pixel sampling
    assert out[0, 0, 0] == 0.0 and out[2, 2, 0] == 3.0


def test_resize_matches_bruteforce():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 4, 2))
    out = bilinear_resize(a, 7, 3)
    for i in range(7):
        for j in range(3):
            y = max((i + 0.5) * 5 / 7 - 0.5, 0)
            x = max((j + 0.5) * 4 / 3 - 0.5, 0)
            y0, x0 = int(y), int(x)
            y1, x1 = min(y0 + 1, 4), min(x0 + 1, 3)
            ly, lx = y - y0, x - x0
            ref = ((1 - ly) * (1 - lx) * a[y0, x0] + (1 - ly) * lx * a[y0, x1]
                   + ly * (1 - lx) * a[y1, x0] + ly * lx * a[y1, x1])
            np.testing.assert_allclose(out[i, j], ref, atol=1e-12)


def test_resize_rejects_zero_target():
    with pytest.raises(PyramidError):
        bilinear_resize(np.zeros((2, 2, 1)), 0, 3)


def test_shuffle_marker_layout():
    out = pyramid_shuffle(_marker_pyramid(), ShuffleSpec(1))
    assert [np.unique(out.levels[0].data[:, :, c]).tolist() for c in range(4)] == [[10], [1], [2], [3]]
    assert [np.unique(out.levels[1].data[:, :, c]).tolist() for c in range(4)] == [[0], [11], [12], [13]]


def test_shuffle_s0_is_identity():
    p = _marker_pyramid()
    out = pyramid_shuffle(p, ShuffleSpec(0))
    for a, b in zip(p.levels, out.levels):
        assert a.data.tobytes() == b.data.tobytes()


def test_shuffle_constant_interior_levels():
    C, S = 8, 2
    p = FeaturePyramid.zeros(64, 64, C, strides=(8, 16, 32))
    consts = [1.25, -3.0, 7.5]
    for lv, c in zip(p.levels, consts):
        lv.data[:] = c
    out = pyramid_shuffle(p, ShuffleSpec(S))
    mid = out.levels[1].data
    assert np.all(mid[:, :, :S] == consts[0])
    assert np.all(mid[:, :, S:2 * S] == consts[2])
    assert np.all(mid[:, :, 2 * S:] == consts[1])
    first = out.levels[0].data
    assert np.all(first[:, :, :S] == consts[1]) and np.all(first[:, :, S:] == consts[0])
    last = out.levels[2].data
    assert np.all(last[:, :, :S] == consts[1]) and np.all(last[:, :, S:] == consts[2])


def test_shuffle_does_not_modify_input():
    p = _marker_pyramid()
    before = [lv.data.copy() for lv in p.levels]
    pyramid_shuffle(p, ShuffleSpec(1))
    for b, lv in zip(before, p.levels):
        np.testing.assert_array_equal(b, lv.data)


def test_shuffle_spec_errors():
    with pytest.raises(PyramidError):
        pyramid_shuffle(_marker_pyramid(), ShuffleSpec(3))
    with pytest.raises(PyramidError):
        ShuffleSpec(-1)


def test_pyramid_validation():
    with pytest.raises(PyramidError):
        FeaturePyramid([Level(8, np.zeros((4, 4, 2))), Level(16, np.zeros((2, 2, 3)))])
    with pytest.raises(PyramidError):
        FeaturePyramid([Level(16, np.zeros((4, 4, 2))), Level(8, np.zeros((8, 8, 2)))])


def test_anchor_grid_single_level():
    a = anchor_grid([(2, 2)], [8])
    assert a.points.tolist() == [[4, 4], [12, 4], [4, 12], [12, 12]]


def test_site_counts():
    assert len(anchor_grid([(100, 100), (50, 50), (25, 25)], [8, 16, 32])) == 13125
    a = dense_anchors(800, 800, DEFAULT_STRIDES)
    assert len(a) == 13343
    assert a.index.tolist() == list(range(13343))
    p = FeaturePyramid.zeros(800, 800, 4)
    assert len(dense_query_init(p)) == 13343
