"""Seeding scheme for reproducible replicate streams.

Every replicate owns a counter-based generator: NumPy's ``Philox`` bit
generator (Philox4x64 with 10 rounds), keyed directly with a 64-bit seed and
started at counter 0.  Replicate ``r`` of an experiment with base seed ``s``
uses the key ``s XOR (r * 0x9E3779B97F4A7C15 mod 2**64)``.  Variates are drawn
through :class:`numpy.random.Generator`, so uniform, normal and integer draws
follow NumPy's documented transforms.
"""

import numpy as np

GENERATOR_NAME = "Philox4x64-10 (numpy.random.Philox, key=seed, counter=0) via numpy.random.Generator"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Seed of replicate ``replicate`` derived from ``base_seed``."""
    if replicate < 0:
        raise ValueError("replicate index must be nonnegative")
    return (int(base_seed) ^ ((int(replicate) * _GOLDEN) & _MASK64)) & _MASK64


def make_generator(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))
