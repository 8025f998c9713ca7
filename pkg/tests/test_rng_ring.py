import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adpir.pir import ring
from adpir.rng import Csprng, expand_uniform_u32


def schoolbook(a, b, q):
    """Negacyclic product with Python integers; the reference for ring tests."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return np.array([x % q for x in out], dtype=np.uint64)


class TestCsprng:
    def test_seeded_streams_repeat(self):
        assert Csprng(b"s").bytes(64) == Csprng(b"s").bytes(64)
        assert Csprng(b"s").bytes(64) != Csprng(b"t").bytes(64)

    def test_unseeded_streams_differ(self):
        assert Csprng().bytes(32) != Csprng().bytes(32)

    def test_fork_is_independent_and_does_not_advance(self):
        a, b = Csprng(b"x"), Csprng(b"x")
        child = a.fork(b"child")
        assert a.bytes(16) == b.bytes(16)
        assert child.bytes(16) != Csprng(b"x").bytes(16)
        assert Csprng(b"x").fork(b"other").bytes(16) != Csprng(b"x").fork(b"child").bytes(16)

    def test_ternary_support_and_balance(self):
        t = Csprng(b"t").ternary((30000,))
        assert set(np.unique(t)) == {-1, 0, 1}
        counts = np.bincount(t + 1)
        assert np.all(np.abs(counts / t.size - 1 / 3) < 0.02)

    @pytest.mark.parametrize("eta", [8, 16, 24, 32, 64])
    def test_centered_binomial_moments(self, eta):
        e = Csprng(b"cbd").centered_binomial((200000,), eta)
        assert abs(e.mean()) < 0.05
        assert abs(e.var() / (eta / 2) - 1) < 0.03
        assert np.abs(e).max() <= eta

    @pytest.mark.parametrize("eta", [0, 7, 72])
    def test_centered_binomial_rejects_bad_eta(self, eta):
        with pytest.raises(ValueError):
            Csprng(b"x").centered_binomial((4,), eta)

    def test_expand_is_public_and_deterministic(self):
        a = expand_uniform_u32(b"seed", (3, 8))
        assert a.shape == (3, 8) and a.dtype == np.dtype("<u4")
        assert np.array_equal(a, expand_uniform_u32(b"seed", (3, 8)))
        assert not np.array_equal(a, expand_uniform_u32(b"seeD", (3, 8)))


class TestRing:
    @pytest.mark.parametrize("n", [8, 64, 256])
    def test_matches_schoolbook_with_small_operand(self, n):
        rng = np.random.default_rng(n)
        q = 1 << 32
        a = rng.integers(-(1 << 31), 1 << 31, n)
        s = rng.integers(-1, 2, n)
        got = ring.negacyclic_mul(a.astype(np.float64), s.astype(np.float64), 32)
        assert np.array_equal(got.astype(np.uint64), schoolbook(a, s, q))

    def test_full_size_byte_times_uniform_is_exact(self):
        rng = np.random.default_rng(1)
        n = 1024
        a = rng.integers(-(1 << 31), 1 << 31, n)
        p = rng.integers(-128, 128, n)
        got = ring.negacyclic_mul(a.astype(np.float64), p.astype(np.float64), 32)
        assert np.array_equal(got.astype(np.uint64), schoolbook(a, p, 1 << 32))

    def test_x_times_x_to_the_n_minus_1_is_minus_one(self):
        n = 16
        x = np.zeros(n); x[1] = 1
        y = np.zeros(n); y[n - 1] = 1
        got = ring.negacyclic_mul(x, y, 32)
        assert got[0] == (1 << 32) - 1 and not got[1:].any()

    def test_forward_inverse_roundtrip(self):
        a = np.random.default_rng(2).integers(-1000, 1000, (3, 64)).astype(np.float64)
        assert np.allclose(ring.inverse(ring.forward(a)), a, atol=1e-9)

    def test_centered_lift(self):
        a = np.array([0, 1, (1 << 31) - 1, 1 << 31, (1 << 32) - 1], dtype=np.uint32)
        assert ring.centered(a, 32).tolist() == [0, 1, (1 << 31) - 1, -(1 << 31), -1]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, (1 << 32) - 1), min_size=1, max_size=32),
           st.sampled_from([(11, 2), (8, 4), (16, 2), (4, 3)]))
    def test_gadget_decomposition_reconstructs(self, values, shape):
        base_bits, levels = shape
        a = np.array(values, dtype=np.uint32)
        d = ring.gadget_decompose(a, base_bits, levels, 32)
        assert d.shape == (levels, len(values))
        half = 1 << (base_bits - 1)
        assert d.min() >= -half and d.max() < half
        skip = 32 - base_bits * levels
        recon = sum(d[i].astype(object) * (1 << (skip + base_bits * i)) for i in range(levels))
        for orig, r in zip(values, recon):
            err = (orig - r) % (1 << 32)
            err = err - (1 << 32) if err >= 1 << 31 else err
            assert abs(err) <= (1 << skip) // 2 if skip else err == 0
