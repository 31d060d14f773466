"""Portable SplitMix64 random streams.

Every random draw in carewatch (parameter init, shuffling, synthetic traces)
comes from this generator so results are reproducible across platforms and
across independent implementations.  The recurrence is::

    state_i = seed + i * 0x9E3779B97F4A7C15            (mod 2**64, i = 1, 2, ...)
    z = (state_i ^ (state_i >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_i = z ^ (z >> 31)

Because output ``i`` depends only on ``seed`` and ``i`` the stream is evaluated
in vectorized blocks.  Derived quantities:

* uniform in [0, 1):  ``(out >> 11) * 2**-53``
* normal:             Box-Muller, ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` with
                      consecutive uniforms ``u1, u2``
* permutation(n):     stable argsort of ``n`` uniforms
"""

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed, *keys):
    """Combine a base seed with integer keys into a new 64-bit seed."""
    s = int(seed) & _MASK
    for key in keys:
        s = (s * 0x100000001B3 + (int(key) & _MASK) + 0x9E3779B97F4A7C15) & _MASK
        s = int(_mix(np.array([s], dtype=np.uint64))[0])
    return s


class Rng:
    """Counter-based SplitMix64 stream."""

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def next_uint64(self, n):
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.array([self.seed], dtype=np.uint64) + idx * _GAMMA
            return _mix(state)

    def uniform(self, n, low=0.0, high=1.0):
        u = (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, n, mean=0.0, std=1.0):
        u = self.uniform(2 * n).reshape(n, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        return mean + std * r * np.cos(2.0 * np.pi * u[:, 1])

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def integers(self, n, low, high):
        """Integers in [low, high)."""
        return low + np.floor(self.uniform(n) * (high - low)).astype(np.int64)
