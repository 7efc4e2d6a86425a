"""Counter-based random streams keyed by (seed, tags...)."""

import numpy as np

SCENE = 1
QUERIES = 2
SPARSE = 3
SUBSAMPLE = 4
TRAIN = 5


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Philox generator for ``(seed, *keys)``; independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def child_seed(seed: int, index: int) -> int:
    """Stable 32-bit seed for item ``index`` under a master ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])
