import numpy as np


def derived_rng(seed: int | None, *keys: int) -> np.random.Generator:
    """Generator keyed on (seed, *keys); independent of call order or thread.

    ``seed=None`` draws fresh OS entropy.
    """
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))
