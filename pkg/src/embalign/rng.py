"""Seeded random streams.

Every stream is a Philox counter-based generator keyed directly by the 64-bit
seed, so draws are reproducible across platforms and numpy versions.  Normals
come from Box-Muller on the stream's uniforms rather than numpy's ziggurat.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def row_seed(seed, index):
    """Per-row seed for batch defenses: ``seed XOR index``."""
    return (int(seed) ^ int(index)) & _MASK64


def standard_normal(gen, size):
    size = int(size)
    pairs = (size + 1) // 2
    u1 = 1.0 - gen.random(pairs)  # (0, 1], keeps log finite
    u2 = gen.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:size]


def unit_sphere(gen, dim):
    while True:
        z = standard_normal(gen, dim)
        n = np.linalg.norm(z)
        if n > 0.0:
            return z / n
