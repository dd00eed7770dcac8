"""Seeded universal hashing into power-of-two bin ranges.

All hash functions used by the engine come from one multiply-add-shift
family over 64-bit arithmetic: h(x) = ((a*x + b) mod 2**64) >> (64 - l)
with an odd multiplier a and range 2**l. Parameters are derived
deterministically from a master seed through a splitmix-style expander,
so every component (traffic matrix, sketch sub-stream router, sketch
column router) gets its own decorrelated function while the whole run
stays reproducible from a single integer.
"""

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Fixed sub-seed stream indices for the engine's standard hash functions.
STREAM_BRICK = 0       # h  : keys -> matrix bins
STREAM_SUBSTREAM = 1   # h1 : keys -> sketch sub-streams
STREAM_COLUMN = 2      # h2 : keys -> sketch columns
STREAM_MONTECARLO = 3  # per-window Monte Carlo threshold draws
STREAM_TRIAL = 4       # evaluation-harness trial sub-seeds


def _mix(x):
    """splitmix64 finalizer: one well-avalanched 64-bit permutation."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master, *indices):
    """Derive a 64-bit sub-seed from a master seed and an index path.

    Distinct index paths give decorrelated seeds; the same path always
    gives the same seed. Used to hand out independent RNG/hash streams
    (per component, per window, per trial) from one master seed.
    """
    s = _mix(master & _MASK64)
    for ix in indices:
        s = _mix(s ^ _mix(ix & _MASK64))
    return s


@dataclass(frozen=True)
class HashFn:
    """One member of the multiply-add-shift family, fixed at creation.

    a : odd 64-bit multiplier
    b : 64-bit offset
    range : power-of-two output range; outputs lie in [0, range)
    """

    a: int
    b: int
    range: int
    shift: int

    def __call__(self, key):
        return ((self.a * (key & _MASK64) + self.b) & _MASK64) >> self.shift

    def apply(self, keys):
        """Vectorized form over a uint64 array of keys."""
        keys = np.asarray(keys, dtype=np.uint64)
        with np.errstate(over="ignore"):
            v = np.uint64(self.a) * keys + np.uint64(self.b)
        return (v >> np.uint64(self.shift)).astype(np.int64)


def make_hash(seed, range):
    """Build the hash function for `seed` with the given power-of-two range.

    The same (seed, range) pair always yields the identical function.
    Ranges outside [2, 2**32] or non-powers-of-two are rejected.
    """
    if not isinstance(range, int) or range < 2 or range > (1 << 32):
        raise ValueError("hash range must be an integer in [2, 2**32], got %r" % (range,))
    if range & (range - 1):
        raise ValueError("hash range must be a power of two, got %d" % range)
    bits = range.bit_length() - 1
    a = derive_seed(seed, 0x68617368) | 1  # odd multiplier
    b = derive_seed(seed, 0x6F666673)
    return HashFn(a=a, b=b, range=range, shift=64 - bits)
