"""Time the numba kernels against their numpy twins on detector-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Every kernel is run once per backend before timing (JIT warm-up) and the two
outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from ddq import _kernels
from ddq.simulator.queries import generate_dense_queries
from ddq.simulator.scene import SceneConfig, generate_scene


def _random_boxes(rng, n, size=800.0):
    xy = rng.uniform(0, size, (n, 2))
    wh = rng.uniform(8, 160, (n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def _cases(rng):
    qs = generate_dense_queries(generate_scene(SceneConfig(seed=0)))
    order = qs.score_order()
    a, b = _random_boxes(rng, 2000), _random_boxes(rng, 2000)
    ious = _kernels.pairwise_iou(_random_boxes(rng, 3000), _random_boxes(rng, 50))
    return [
        ("pairwise_iou 2000x2000", lambda: _kernels.pairwise_iou(a, b)),
        ("nms dense 13343 @0.7", lambda: _kernels.nms(qs.boxes, order, 0.7)),
        ("count_pairs_above 2000", lambda: _kernels.count_pairs_above(a, 0.7)),
        ("greedy_match 3000x50", lambda: _kernels.greedy_match(ious, 0.5)),
        ("lsap 23x200", lambda c=rng.uniform(-10, 10, (23, 200)): _kernels.linear_sum_assignment(c)),
        ("lsap 150x300", lambda c=rng.uniform(-10, 10, (150, 300)): _kernels.linear_sum_assignment(c)),
    ]


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name, fn in cases:
        outs, times = [], []
        for b in backends:
            with _kernels.use_backend(b):
                outs.append(fn())
                times.append(_best(fn, args.repeat))
        if len(outs) > 1 and not np.array_equal(outs[0], outs[1]):
            raise SystemExit(f"{name}: backends disagree")
        row = f"{name:<26}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
