"""Feature pyramids: bilinear resizing, pyramid shuffle, dense query sites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_STRIDES = (8, 16, 32, 64, 128)


class PyramidError(ValueError):
    pass


@dataclass
class Level:
    stride: int
    data: np.ndarray  # (H, W, C)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise PyramidError(f"level data must be a non-empty H x W x C array, got {self.data.shape}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise PyramidError(f"stride must be a positive integer, got {self.stride}")
        self.stride = int(self.stride)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass
class FeaturePyramid:
    levels: List[Level]
    image_size: Optional[Tuple[int, int]] = None  # (H, W) in pixels

    def __post_init__(self):
        if not self.levels:
            raise PyramidError("pyramid needs at least one level")
        chans = {lv.channels for lv in self.levels}
        if len(chans) != 1:
            raise PyramidError(f"all levels must share the channel count, got {sorted(chans)}")
        strides = [lv.stride for lv in self.levels]
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise PyramidError(f"strides must strictly increase, got {strides}")
        if self.image_size is not None:
            img_h, img_w = self.image_size
        else:
            base = self.levels[0]
            img_h, img_w = base.height * base.stride, base.width * base.stride
        for lv in self.levels:
            exp_h, exp_w = math.ceil(img_h / lv.stride), math.ceil(img_w / lv.stride)
            if abs(lv.height - exp_h) > 1 or abs(lv.width - exp_w) > 1:
                raise PyramidError(
                    f"level with stride {lv.stride} has size {lv.height}x{lv.width}, "
                    f"expected about {exp_h}x{exp_w}")

    @property
    def channels(self):
        return self.levels[0].channels

    @property
    def strides(self):
        return [lv.stride for lv in self.levels]

    @property
    def shapes(self):
        return [(lv.height, lv.width) for lv in self.levels]

    @classmethod
    def zeros(cls, image_h, image_w, channels, strides=DEFAULT_STRIDES, dtype=np.float64):
        levels = [Level(s, np.zeros((h, w, channels), dtype=dtype))
                  for s, (h, w) in zip(strides, level_shapes(image_h, image_w, strides))]
        return cls(levels, image_size=(image_h, image_w))


@dataclass(frozen=True)
class ShuffleSpec:
    S: int = 64

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 0:
            raise PyramidError(f"S must be a non-negative integer, got {self.S}")

    def check(self, channels: int):
        if 2 * self.S > channels:
            raise PyramidError(f"2*S = {2 * self.S} exceeds channel count {channels}")


@dataclass
class AnchorQueryInit:
    points: np.ndarray  # (N, 2) anchor (x, y) in pixels
    levels: np.ndarray  # (N,) level index
    strides: np.ndarray  # (N,) stride of the level
    index: np.ndarray = field(default=None)  # (N,) flat query index

    def __post_init__(self):
        if self.index is None:
            self.index = np.arange(len(self.points), dtype=np.int64)

    def __len__(self):
        return len(self.points)


def level_shapes(image_h, image_w, strides=DEFAULT_STRIDES):
    return [(math.ceil(image_h / s), math.ceil(image_w / s)) for s in strides]


def _axis_weights(n_in, n_out):
    # align_corners=False sampling positions
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    lam = src - i0
    return i0, i1, lam


def bilinear_resize(arr, target_h: int, target_w: int) -> np.ndarray:
    """Resize an ``H x W x k`` array with half-pixel-centre bilinear sampling.

    Interpolation is done in ``a + t * (b - a)`` form so constant inputs come
    out bit-identical.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise PyramidError(f"expected a non-empty H x W x k array, got shape {arr.shape}")
    if target_h < 1 or target_w < 1:
        raise PyramidError(f"target size must be positive, got {target_h}x{target_w}")
    h, w, _ = arr.shape
    if (h, w) == (target_h, target_w):
        return arr.copy()
    y0, y1, ly = _axis_weights(h, target_h)
    x0, x1, lx = _axis_weights(w, target_w)
    lx = lx[None, :, None]
    top = arr[y0][:, x0] + lx * (arr[y0][:, x1] - arr[y0][:, x0])
    bot = arr[y1][:, x0] + lx * (arr[y1][:, x1] - arr[y1][:, x0])
    return top + ly[:, None, None] * (bot - top)


def pyramid_shuffle(p: FeaturePyramid, spec: ShuffleSpec) -> FeaturePyramid:
    """Exchange ``S`` channels with each adjacent level.

    Interior level ``i`` takes channels ``[0, S)`` of level ``i - 1`` into its
    slots ``[0, S)`` and channels ``[S, 2S)`` of level ``i + 1`` into slots
    ``[S, 2S)``. An edge level has a single neighbour, which occupies slots
    ``[0, S)`` (read from the neighbour's ``[0, S)``); its slots ``[S, 2S)``
    keep their own channels. All reads come from the input pyramid.
    """
    spec.check(p.channels)
    S = spec.S
    src = [lv.data for lv in p.levels]
    n = len(src)
    out = []
    for i, lv in enumerate(p.levels):
        data = lv.data.copy()
        if S > 0 and n > 1:
            h, w = lv.height, lv.width
            if 0 < i < n - 1:
                data[:, :, :S] = bilinear_resize(src[i - 1][:, :, :S], h, w)
                data[:, :, S:2 * S] = bilinear_resize(src[i + 1][:, :, S:2 * S], h, w)
            else:
                nb = i + 1 if i == 0 else i - 1
                data[:, :, :S] = bilinear_resize(src[nb][:, :, :S], h, w)
        out.append(Level(lv.stride, data))
    return FeaturePyramid(out, image_size=p.image_size)


def anchor_grid(shapes: Sequence[Tuple[int, int]], strides: Sequence[int]) -> AnchorQueryInit:
    """One anchor per cell: levels in order, row-major within a level."""
    pts, lvls, strs = [], [], []
    for li, ((h, w), s) in enumerate(zip(shapes, strides)):
        rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        xy = np.stack([(cols.ravel() + 0.5) * s, (rows.ravel() + 0.5) * s], axis=1)
        pts.append(xy)
        lvls.append(np.full(h * w, li, dtype=np.int64))
        strs.append(np.full(h * w, s, dtype=np.int64))
    if not pts:
        return AnchorQueryInit(np.empty((0, 2)), np.empty(0, np.int64), np.empty(0, np.int64))
    return AnchorQueryInit(np.concatenate(pts).astype(np.float64), np.concatenate(lvls), np.concatenate(strs))


def dense_query_init(p: FeaturePyramid) -> AnchorQueryInit:
    return anchor_grid(p.shapes, p.strides)


def dense_anchors(image_h, image_w, strides=DEFAULT_STRIDES) -> AnchorQueryInit:
    return anchor_grid(level_shapes(image_h, image_w, strides), strides)
