import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfoco.rng import Xoshiro256, splitmix64

M = (1 << 64) - 1


def reference_stream(seed, n):
    # Written from the published reference, independent of the package.
    def sm(x):
        x = (x + 0x9E3779B97F4A7C15) & M
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
        return x, z ^ (z >> 31)

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & M

    s, x = [], seed & M
    for _ in range(4):
        x, out = sm(x)
        s.append(out)
    outs = []
    for _ in range(n):
        outs.append((rotl((s[1] * 5) & M, 7) * 9) & M)
        t = (s[1] << 17) & M
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return outs


def test_splitmix_known_values():
    state, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF
    assert splitmix64(state)[1] == 0x6E789E6AA1B965F4


def test_first_output_for_seed_zero():
    assert Xoshiro256(0).next_u64() == 0x99EC5F36CB75F2B4


@given(st.integers(0, 2**64 - 1))
def test_stream_matches_reference(seed):
    r = Xoshiro256(seed)
    assert [r.next_u64() for _ in range(8)] == reference_stream(seed, 8)


def test_state_round_trip():
    r = Xoshiro256(11)
    r.gauss(0, 1)
    state = r.getstate()
    a = [r.random() for _ in range(5)] + [r.gauss(0, 1)]
    r.setstate(state)
    assert a == [r.random() for _ in range(5)] + [r.gauss(0, 1)]


def test_derived_draws():
    r = Xoshiro256(3)
    u = np.array([r.random() for _ in range(2000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.03
    assert 0 <= r.randrange(10) < 10
    assert r.getrandbits(0) == 0
    assert r.getrandbits(100) < 2**100
    with pytest.raises(ValueError):
        r.getrandbits(-1)
