"""Counter-based random streams keyed by (master seed, tag, replicate index).

Every replicate of every experiment draws from its own Philox stream, so
results do not depend on how replicates are distributed over workers.
"""

import zlib

import numpy as np


def stream(seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    """Independent generator for replicate ``index`` of the task ``tag``."""
    key = (zlib.crc32(tag.encode("utf-8")), int(index))
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng=None) -> np.random.Generator:
    """Accept a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return stream(int(rng))


def kernel_seed(rng: np.random.Generator) -> int:
    """Seed for the compiled kernels, which keep their own generator state."""
    return int(rng.integers(0, 2**32 - 1))


def key_generator(key: int) -> np.random.Generator:
    """Generator attached to a single marked point (see MarkedConfiguration)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(key))))
