"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``DDQ_DISABLE_NUMBA``
is unset (or ``0``). Both paths evaluate the same floating point expressions
in the same order, so their outputs agree bit for bit.
"""

import contextlib
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_FLAG = os.environ.get("DDQ_DISABLE_NUMBA", "").strip().lower()
BACKEND = "numpy" if (numba is None or _FLAG in ("1", "true", "yes")) else "numba"


def available_backends():
    return ("numba", "numpy") if numba is not None else ("numpy",)


def get_backend():
    return BACKEND


def set_backend(name):
    global BACKEND
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available; choose from {available_backends()}")
    BACKEND = name


@contextlib.contextmanager
def use_backend(name):
    prev = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@_njit
def _pair_iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw < 0.0:
        iw = 0.0
    if ih < 0.0:
        ih = 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union > 0.0:
        return inter / union
    return 0.0


@_njit
def _pairwise_iou_nb(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = _pair_iou(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                                  b[j, 0], b[j, 1], b[j, 2], b[j, 3])
    return out


@_njit
def _nms_nb(boxes, order, thresh):
    n = order.shape[0]
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    nk = 0
    for a in range(n):
        if suppressed[a]:
            continue
        i = order[a]
        keep[nk] = i
        nk += 1
        x1, y1, x2, y2 = boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3]
        for b in range(a + 1, n):
            if suppressed[b]:
                continue
            j = order[b]
            if _pair_iou(x1, y1, x2, y2, boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]) > thresh:
                suppressed[b] = True
    return keep[:nk]


@_njit
def _count_pairs_above_nb(boxes, thresh):
    n = boxes.shape[0]
    count = 0
    for i in range(n):
        x1, y1, x2, y2 = boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3]
        for j in range(i + 1, n):
            if _pair_iou(x1, y1, x2, y2, boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]) > thresh:
                count += 1
    return count


@_njit
def _greedy_match_nb(ious, thresh):
    nd, ng = ious.shape
    taken = np.zeros(ng, dtype=np.bool_)
    match = np.full(nd, -1, dtype=np.int64)
    for d in range(nd):
        best = -1
        best_iou = thresh
        for g in range(ng):
            if taken[g]:
                continue
            v = ious[d, g]
            if v >= best_iou and (best == -1 or v > best_iou):
                best = g
                best_iou = v
        if best >= 0:
            taken[best] = True
            match[d] = best
    return match


@_njit
def _lsap_nb(cost):
    # shortest augmenting path (Jonker-Volgenant style), rows <= cols
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    shortest = np.empty(nc)
    path = np.full(nc, -1, dtype=np.int64)
    col4row = np.full(nr, -1, dtype=np.int64)
    row4col = np.full(nc, -1, dtype=np.int64)
    sr = np.zeros(nr, dtype=np.bool_)
    sc = np.zeros(nc, dtype=np.bool_)
    remaining = np.empty(nc, dtype=np.int64)
    for cur in range(nr):
        min_val = 0.0
        num_rem = nc
        for it in range(nc):
            remaining[it] = nc - it - 1
        sr[:] = False
        sc[:] = False
        shortest[:] = np.inf
        sink = -1
        i = cur
        while sink == -1:
            index = -1
            lowest = np.inf
            sr[i] = True
            for it in range(num_rem):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            if min_val == np.inf:
                return col4row, False
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = True
            num_rem -= 1
            remaining[index] = remaining[num_rem]
        u[cur] += min_val
        for i in range(nr):
            if sr[i] and i != cur:
                u[i] += min_val - shortest[col4row[i]]
        for j in range(nc):
            if sc[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
    return col4row, True


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _iou_one_to_many(box, others):
    iw = np.minimum(box[2], others[:, 2]) - np.maximum(box[0], others[:, 0])
    ih = np.minimum(box[3], others[:, 3]) - np.maximum(box[1], others[:, 1])
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    union = (box[2] - box[0]) * (box[3] - box[1]) + (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1]) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def _pairwise_iou_np(a, b):
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def _nms_np(boxes, order, thresh):
    keep = []
    order = np.asarray(order)
    while order.size > 0:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        ovr = _iou_one_to_many(boxes[i], boxes[rest])
        order = rest[ovr <= thresh]
    return np.asarray(keep, dtype=np.int64)


def _count_pairs_above_np(boxes, thresh, chunk=1024):
    n = boxes.shape[0]
    count = 0
    for start in range(0, n, chunk):
        block = _pairwise_iou_np(boxes[start:start + chunk], boxes)
        rows = np.arange(start, min(start + chunk, n))
        upper = np.arange(n)[None, :] > rows[:, None]
        count += int(np.count_nonzero((block > thresh) & upper))
    return count


def _greedy_match_np(ious, thresh):
    nd, ng = ious.shape
    taken = np.zeros(ng, dtype=bool)
    match = np.full(nd, -1, dtype=np.int64)
    for d in range(nd):
        row = np.where(taken | (ious[d] < thresh), -np.inf, ious[d])
        if ng == 0 or not np.isfinite(row.max()):
            continue
        g = int(np.argmax(row))
        taken[g] = True
        match[d] = g
    return match


def _lsap_np(cost):
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    path = np.full(nc, -1, dtype=np.int64)
    col4row = np.full(nr, -1, dtype=np.int64)
    row4col = np.full(nc, -1, dtype=np.int64)
    for cur in range(nr):
        min_val = 0.0
        remaining = np.arange(nc - 1, -1, -1, dtype=np.int64)
        sr = np.zeros(nr, dtype=bool)
        sc = np.zeros(nc, dtype=bool)
        shortest = np.full(nc, np.inf)
        sink = -1
        i = cur
        while sink == -1:
            sr[i] = True
            r = min_val + cost[i, remaining] - u[i] - v[remaining]
            better = r < shortest[remaining]
            path[remaining[better]] = i
            shortest[remaining[better]] = r[better]
            sh = shortest[remaining]
            lowest = sh.min()
            if lowest == np.inf:
                return col4row, False
            # same pick as the sequential scan: last free column among the
            # minima, otherwise the first minimum
            at_min = np.flatnonzero(sh == lowest)
            free = at_min[row4col[remaining[at_min]] == -1]
            index = int(free[-1]) if free.size else int(at_min[0])
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = True
            remaining[index] = remaining[-1]
            remaining = remaining[:-1]
        u[cur] += min_val
        others = np.flatnonzero(sr)
        others = others[others != cur]
        u[others] += min_val - shortest[col4row[others]]
        v[sc] -= min_val - shortest[sc]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break
    return col4row, True


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _as_boxes(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1, 4))


def pairwise_iou(a, b):
    a, b = _as_boxes(a), _as_boxes(b)
    if BACKEND == "numba":
        return _pairwise_iou_nb(a, b)
    return _pairwise_iou_np(a, b)


def nms(boxes, order, thresh):
    """Greedy suppression over ``order``; returns kept indices in visit order."""
    boxes = _as_boxes(boxes)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if BACKEND == "numba":
        return _nms_nb(boxes, order, float(thresh))
    return _nms_np(boxes, order, float(thresh))


def count_pairs_above(boxes, thresh):
    boxes = _as_boxes(boxes)
    if BACKEND == "numba":
        return int(_count_pairs_above_nb(boxes, float(thresh)))
    return _count_pairs_above_np(boxes, float(thresh))


def greedy_match(ious, thresh):
    """Rows are detections in score order; returns matched column or -1."""
    ious = np.ascontiguousarray(ious, dtype=np.float64)
    if ious.ndim != 2:
        raise ValueError("ious must be 2-D")
    if BACKEND == "numba":
        return _greedy_match_nb(ious, float(thresh))
    return _greedy_match_np(ious, float(thresh))


def linear_sum_assignment(cost):
    """Column chosen for every row of a rows <= cols cost matrix."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    nr, nc = cost.shape
    if nr > nc:
        raise ValueError("linear_sum_assignment needs rows <= cols")
    if nr == 0:
        return np.empty(0, dtype=np.int64)
    if BACKEND == "numba":
        col4row, ok = _lsap_nb(cost)
    else:
        col4row, ok = _lsap_np(cost)
    if not ok:
        raise ValueError("cost matrix is infeasible")
    return col4row
