"""SplitMix64 evaluated per cell index.

Value ``i`` of a stream depends only on ``(seed, i)``, so the noise field is
independent of traversal order and identical on every platform.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of SplitMix64 started at ``seed``."""
    with np.errstate(over="ignore"):
        idx = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def uniform(seed: int, count: int) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits."""
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def symmetric(seed: int, shape) -> np.ndarray:
    """Noise in ``[-1, 1)`` with the given shape, filled in row-major order."""
    count = int(np.prod(shape))
    return (2.0 * uniform(seed, count) - 1.0).reshape(shape)
