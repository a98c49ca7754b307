"""Seeded, counter-based random streams.

Every stochastic routine in this package draws from a Philox counter-based
generator keyed by explicit integers, so results are reproducible across
platforms and independent of call order between streams. Gaussian variates
are produced by the Box-Muller transform on Philox uniforms rather than a
library-specific normal sampler.
"""

from __future__ import annotations

import numpy as np

_TWO_PI = 2.0 * np.pi


def stream(*key: int) -> np.random.Generator:
    """Independent generator for the integer key tuple.

    Keys are folded into the 4-word Philox key space, so distinct short
    tuples give distinct streams.
    """
    words = [0, 0]
    for i, k in enumerate(key):
        words[i % 2] = (words[i % 2] * 0x9E3779B97F4A7C15 + int(k) + 1) % (2**64)
    return np.random.Generator(np.random.Philox(key=np.array(words, dtype=np.uint64)))


def uniform(gen: np.random.Generator, shape) -> np.ndarray:
    return gen.random(shape, dtype=np.float64)


def normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via Box-Muller on Philox uniforms."""
    n = int(np.prod(shape)) if shape else 1
    half = (n + 1) // 2
    u1 = 1.0 - gen.random(half, dtype=np.float64)  # (0, 1]
    u2 = gen.random(half, dtype=np.float64)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)])[:n]
    return z.reshape(shape)
