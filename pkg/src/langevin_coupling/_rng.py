"""Counter-based Philox4x64-10 streams.

A draw is addressed by a key (seed, stream tag) and a counter
(step, index, block, 0), so any worker can produce any particle's noise for
any step without shared state.  The same round function serves both
backends: compiled by numba for scalars and run directly on uint64 arrays
for numpy.
"""

import math

import numpy as np

from ._backend import PURE_NUMPY

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

# stream tags keep the noise of different roles independent
TAG_PAIR = 1
TAG_PARTICLE = 2
TAG_REFERENCE = 3
TAG_CHAOS = 4
TAG_INIT = 5


def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, lo


def _philox_raw(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


def _box_muller(u0, u1):
    # u0 is mapped into (0, 1] so the log is finite
    a = ((u0 >> _S11) + _ONE) * _TWO_M53
    b = (u1 >> _S11) * _TWO_M53
    rad = np.sqrt(-2.0 * np.log(a))
    return rad * np.cos(_TWO_PI * b), rad * np.sin(_TWO_PI * b)


def normals_numpy(key0, key1, step, index, count):
    """Standard normals of shape (len(index), count), vectorised over index."""
    index = np.asarray(index, dtype=np.uint64)
    blocks = (count + 3) // 4
    out = np.empty((index.size, blocks * 4))
    k0 = np.full(index.shape, key0, dtype=np.uint64)
    k1 = np.full(index.shape, key1, dtype=np.uint64)
    c0 = np.full(index.shape, step, dtype=np.uint64)
    zero = np.zeros(index.shape, dtype=np.uint64)
    for blk in range(blocks):
        c2 = np.full(index.shape, blk, dtype=np.uint64)
        r0, r1, r2, r3 = _philox_raw(c0, index, c2, zero, k0, k1)
        z0, z1 = _box_muller(r0, r1)
        z2, z3 = _box_muller(r2, r3)
        out[:, 4 * blk] = z0
        out[:, 4 * blk + 1] = z1
        out[:, 4 * blk + 2] = z2
        out[:, 4 * blk + 3] = z3
    return out[:, :count]


def philox_block_numpy(counter, key):
    """Raw Philox4x64-10 output for one counter and key, as four uint64."""
    c = [np.array([x], dtype=np.uint64) for x in counter]
    k = [np.array([x], dtype=np.uint64) for x in key]
    return tuple(int(v[0]) for v in _philox_raw(c[0], c[1], c[2], c[3], k[0], k[1]))


def stream_key(seed, tag):
    """Key words for a (seed, tag) stream; the seed is reduced to 64 bits."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(int(tag))


if not PURE_NUMPY:
    import numba

    _mulhilo = numba.njit(inline="always")(_mulhilo)
    _philox_raw = numba.njit(inline="always")(_philox_raw)

    @numba.njit(inline="always")
    def _box_muller_scalar(u0, u1):
        a = ((u0 >> _S11) + _ONE) * _TWO_M53
        b = (u1 >> _S11) * _TWO_M53
        rad = math.sqrt(-2.0 * math.log(a))
        return rad * math.cos(_TWO_PI * b), rad * math.sin(_TWO_PI * b)

    @numba.njit(inline="always")
    def fill_normals(out, key0, key1, step, index):
        """Write len(out) normals for (step, index) into ``out``."""
        n = out.shape[0]
        blk = 0
        pos = 0
        zero = np.uint64(0)
        while pos < n:
            r0, r1, r2, r3 = _philox_raw(np.uint64(step), np.uint64(index), np.uint64(blk), zero,
                                         key0, key1)
            z0, z1 = _box_muller_scalar(r0, r1)
            z2, z3 = _box_muller_scalar(r2, r3)
            out[pos] = z0
            if pos + 1 < n:
                out[pos + 1] = z1
            if pos + 2 < n:
                out[pos + 2] = z2
            if pos + 3 < n:
                out[pos + 3] = z3
            pos += 4
            blk += 1

    @numba.njit(cache=True)
    def normals_numba(key0, key1, step, index, count):
        out = np.empty((index.size, count))
        for i in range(index.size):
            fill_normals(out[i], key0, key1, step, index[i])
        return out
