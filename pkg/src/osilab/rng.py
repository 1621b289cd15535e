"""Counter-based random streams keyed by 64-bit seeds.

A seed ``s`` owns the stream ``x_j = mix64(s + (j + 1) * GOLDEN)``, which is
exactly the SplitMix64 output sequence started from state ``s``. Because
each value depends only on ``(s, j)``, streams for a whole batch of seeds
are produced with vectorized uint64 arithmetic, and a draw is bit-identical
whether it is made alone or inside any batch.
"""
import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z):
    """SplitMix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def derive_seed(master_seed, index, salt=0):
    """Seed of trial ``index`` under ``master_seed``.

    ``hash64(master, i) = mix64(mix64(master ^ mix64(salt)) + (i + 1) * GOLDEN)``;
    the salt separates e.g. calibration trials from verification trials.
    """
    key = mix64((master_seed ^ mix64(salt)) & MASK64)
    return mix64(key + (index + 1) * GOLDEN)


def derive_seeds(master_seed, indices, salt=0):
    """Vectorized ``derive_seed`` over an array of trial indices."""
    key = np.uint64(mix64((master_seed ^ mix64(salt)) & MASK64))
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = key + (idx + np.uint64(1)) * np.uint64(GOLDEN)
    return _mix64_array(z)


def as_seeds(seeds):
    if not isinstance(seeds, np.ndarray):
        # Python ints above 2^63 would otherwise be promoted to float64
        seeds = np.asarray(seeds, dtype=object)
    if seeds.dtype != np.uint64:
        if seeds.dtype.kind == "f":
            raise ValueError("seeds must be integers")
        if np.any(seeds.astype(object) < 0):
            raise ValueError("seeds must be non-negative")
        seeds = np.array([int(s) & MASK64 for s in seeds.ravel()], dtype=np.uint64).reshape(
            seeds.shape
        )
    return seeds


class CounterStream:
    """Independent random streams for a 1-D batch of seeds.

    Each call consumes the next ``m`` counters of every stream and returns an
    array of shape ``(len(seeds), m)``.
    """

    def __init__(self, seeds):
        self.seeds = np.atleast_1d(as_seeds(seeds))
        if self.seeds.ndim != 1:
            raise ValueError("seeds must be a 1-D array")
        self.counter = 0

    def raw(self, m):
        j = np.arange(self.counter + 1, self.counter + m + 1, dtype=np.uint64)
        self.counter += m
        with np.errstate(over="ignore"):
            z = self.seeds[:, None] + j[None, :] * np.uint64(GOLDEN)
        return _mix64_array(z)

    def uniform(self, m):
        """Uniform doubles strictly inside (0, 1), 53-bit resolution."""
        x = self.raw(m) >> np.uint64(11)
        return (x.astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, m):
        return ndtri(self.uniform(m))

    def exponential(self, m, mean=1.0):
        return -mean * np.log(self.uniform(m))

    def integers(self, high, m):
        """Uniform integers in ``{0, ..., high - 1}``."""
        return np.minimum((self.uniform(m) * high).astype(np.int64), high - 1)
