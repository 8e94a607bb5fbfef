import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from langevin_coupling import _rng
from langevin_coupling._backend import PURE_NUMPY

u64 = st.integers(0, 2**64 - 1)


def test_philox_known_answer():
    # published Philox4x64-10 answer for zero counter and key
    out = _rng.philox_block_numpy((0, 0, 0, 0), (0, 0))
    assert out == (0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B)


@given(u64, u64, st.integers(0, 2**32))
def test_philox_matches_numpy_bit_generator(k0, k1, c0):
    # numpy advances the counter before each block
    bg = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64),
                          counter=np.array([c0, 0, 0, 0], dtype=np.uint64))
    ref = tuple(int(v) for v in bg.random_raw(4))
    assert _rng.philox_block_numpy((c0 + 1, 0, 0, 0), (k0, k1)) == ref


def test_normals_are_standard():
    k0, k1 = _rng.stream_key(123, _rng.TAG_PAIR)
    z = _rng.normals_numpy(k0, k1, 7, np.arange(50_000, dtype=np.uint64), 6).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    assert np.all(np.isfinite(z))


def test_streams_are_keyed_by_every_coordinate():
    k0, k1 = _rng.stream_key(5, 1)
    base = _rng.normals_numpy(k0, k1, 3, np.array([9], dtype=np.uint64), 8)
    assert np.array_equal(base, _rng.normals_numpy(k0, k1, 3, np.array([9], dtype=np.uint64), 8))
    for other in (_rng.normals_numpy(k0, k1, 4, np.array([9], dtype=np.uint64), 8),
                  _rng.normals_numpy(k0, k1, 3, np.array([10], dtype=np.uint64), 8),
                  _rng.normals_numpy(*_rng.stream_key(5, 2), 3, np.array([9], dtype=np.uint64), 8),
                  _rng.normals_numpy(*_rng.stream_key(6, 1), 3, np.array([9], dtype=np.uint64), 8)):
        assert not np.any(base == other)
    # a prefix of a longer draw is the shorter draw
    assert np.array_equal(base[:, :5], _rng.normals_numpy(k0, k1, 3, np.array([9], dtype=np.uint64), 5))


def test_stream_key_rejects_negative_seed():
    with pytest.raises(ValueError):
        _rng.stream_key(-1, 1)
    assert _rng.stream_key(2**64 + 3, 1)[0] == np.uint64(3)


@pytest.mark.skipif(PURE_NUMPY, reason="compiled backend disabled")
def test_compiled_normals_agree_with_numpy_to_an_ulp():
    k0, k1 = _rng.stream_key(99, _rng.TAG_CHAOS)
    idx = np.arange(4096, dtype=np.uint64)
    a = _rng.normals_numba(k0, k1, np.uint64(11), idx, 7)
    b = _rng.normals_numpy(k0, k1, 11, idx, 7)
    np.testing.assert_allclose(a, b, rtol=0, atol=4 * np.finfo(float).eps * np.max(np.abs(b)))
