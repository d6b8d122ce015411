"""Deterministic counter-based random streams (splitmix64).

Every stochastic stage derives its randomness from a (key, counter) pair so
results depend only on the seed and on what is being sampled, never on
evaluation order, chunking, or thread scheduling.  The scalar functions run
inside numba kernels; the *_np versions are vectorized numpy with identical
bit-level behavior (uint64 wraparound).
"""

import numpy as np

from .backend import USING_NUMBA, jit_kernel

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53
_MASK = (1 << 64) - 1

if USING_NUMBA:
    @jit_kernel
    def mix64(z):
        z = np.uint64(z) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @jit_kernel
    def hash2(a, b):
        return mix64(mix64(a) ^ (np.uint64(b) + np.uint64(0x9E3779B97F4A7C15)))

    @jit_kernel
    def uniform_from(a, b):
        """One double in [0, 1) from the (key, counter) pair."""
        return np.float64(hash2(a, b) >> np.uint64(11)) * _U53
else:
    def mix64(z):
        z = (int(z) + 0x9E3779B97F4A7C15) & _MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def hash2(a, b):
        return mix64(mix64(a) ^ ((int(b) + 0x9E3779B97F4A7C15) & _MASK))

    def uniform_from(a, b):
        return (hash2(a, b) >> 11) * _U53


def mix64_np(z):
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = np.asarray(z, dtype=np.uint64)
        z = z + _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def hash2_np(a, b):
    with np.errstate(over="ignore"):
        return mix64_np(mix64_np(a) ^ (np.asarray(b, dtype=np.uint64) + _GAMMA))


def uniform_np(a, b):
    """Vectorized counterpart of uniform_from (bit-identical)."""
    return (hash2_np(a, b) >> np.uint64(11)).astype(np.float64) * _U53


def key(*parts) -> int:
    """Fold integer tags into a single stream key."""
    h = np.uint64(0)
    for p in parts:
        h = np.uint64(hash2_np(h, np.uint64(int(p) & _MASK)))
    return int(h)
