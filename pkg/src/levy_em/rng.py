"""Counter-based random streams.

Every Monte Carlo path owns a Philox stream keyed by ``(seed, path_index)``,
so a path's noise does not depend on how paths are batched or scheduled.
"""
import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def path_rng(seed, index):
    """Generator for path ``index`` under master ``seed``."""
    seed = check_seed(seed)
    index = int(index)
    if not 0 <= index <= MAX_SEED:
        raise ValueError(f"path index out of range: {index}")
    return np.random.Generator(np.random.Philox(key=(index << 64) | seed))


def as_generator(rng):
    """Accept a Generator, an integer seed, a ``(seed, index)`` pair or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    if isinstance(rng, (tuple, list)):
        return path_rng(*rng)
    return path_rng(rng, 0)
