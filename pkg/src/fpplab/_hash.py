"""Counter-based uniform variates keyed on lattice coordinates.

Every random quantity in the package is a pure function of a key
``(seed, stream, a, b, c)``; there is no generator state.  The mixer is the
SplitMix64 finalizer applied twice around the packed coordinates.
"""

import hashlib

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_OFFSET = np.int64(1 << 30)
_U53 = 1.0 / 9007199254740992.0  # 2**-53

# stream tags keep the Z^2 edge field and the oriented field independent
STREAM_EDGE = 0x45444745
STREAM_ORIENTED = 0x4F52454E

COORD_LIMIT = 1 << 30


@njit(cache=True, nogil=True)
def mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def stream_key(seed, stream, replicate, attempt):
    k = mix64(np.uint64(seed) ^ mix64(np.uint64(stream)))
    k = mix64(k ^ mix64(np.uint64(replicate)))
    return mix64(k ^ mix64(np.uint64(attempt) + np.uint64(0x5851F42D4C957F2D)))


@njit(cache=True, nogil=True)
def uniform_at(key, a, b, c):
    """Uniform in [0, 1) for integer coordinates ``|a|, |b| < 2**30`` and bit ``c``."""
    packed = (
        (np.uint64(np.int64(a) + _OFFSET) << np.uint64(32))
        | (np.uint64(np.int64(b) + _OFFSET) << np.uint64(1))
        | np.uint64(c & 1)
    )
    h = mix64(mix64(key ^ packed) ^ key)
    return np.float64(h >> np.uint64(11)) * _U53


@njit(cache=True, nogil=True)
def uniform_grid(key, x0, y0, width, height, c):
    """Uniforms for the block ``x0 <= x < x0+width``, ``y0 <= y < y0+height``; shape (height, width)."""
    out = np.empty((height, width), dtype=np.float64)
    for j in range(height):
        for i in range(width):
            out[j, i] = uniform_at(key, x0 + i, y0 + j, c)
    return out


def to_u64(value):
    """Reduce any Python int into the unsigned 64-bit range."""
    return int(value) % (1 << 64)


def derive_seed(master, *labels):
    """Stable 64-bit task seed from a master seed and labels (kind, n, replicate, ...)."""
    text = "|".join([str(to_u64(master))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
