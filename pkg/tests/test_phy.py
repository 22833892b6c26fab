import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channels, rel_err
from irs_ofdm import phy
from irs_ofdm.channel import ChannelSet


# ---- naive oracles (pure Python loops, no numpy linear algebra) -------------

def naive_effective(ch, theta, c, k, irs=True):
    M, N, K, C = ch.dims
    out = []
    for m in range(M):
        acc = complex(ch.h_bu[m, k, c])
        if irs:
            for n in range(N):
                acc += complex(ch.H_br[m, n, c]) * cmath.exp(1j * float(theta[n])) * complex(ch.h_ru[n, k, c])
        out.append(acc)
    return out


def naive_rate(ch, theta, c, k, f, sigma2, B, C, irs=True):
    g = naive_effective(ch, theta, c, k, irs)
    amp = sum(gm * complex(fm) for gm, fm in zip(g, f))
    return B / C * math.log2(1.0 + (amp.real ** 2 + amp.imag ** 2) / sigma2)


def naive_power(assignment, beams):
    total = 0.0
    for c, user in enumerate(assignment):
        if user == phy.IDLE:
            continue
        for m in range(beams.shape[0]):
            z = complex(beams[m, c])
            total += z.real * z.real + z.imag * z.imag
    return total


def _instance(rng):
    M, N, K, C = (int(x) for x in rng.integers(1, 5, 4))
    ch = random_channels(rng, M, N, K, C)
    theta = rng.uniform(0, 2 * np.pi, N)
    beams = rng.standard_normal((M, C)) + 1j * rng.standard_normal((M, C))
    lam = rng.integers(0, K, C)
    sigma2 = rng.uniform(0.1, 2.0, K)
    return ch, theta, beams, lam, sigma2


# ---- effective channel ------------------------------------------------------

def test_coherent_unit_instance():
    one = np.ones((1, 1, 1), complex)
    ch = ChannelSet(one, one.copy(), one.copy())
    assert phy.effective_channel(0, 0, ch, np.zeros(1))[0] == 2 + 0j


def test_irs_disabled_returns_direct(rng):
    ch = random_channels(rng, 3, 4, 2, 2)
    assert np.array_equal(phy.effective_channel(1, 1, ch, rng.uniform(0, 6, 4), irs=False), ch.h_bu[:, 1, 1])


def test_effective_channel_matches_triple_loop(rng):
    ch = random_channels(rng, 2, 3, 2, 2)
    theta = rng.uniform(0, 2 * np.pi, 3)
    for c in range(2):
        for k in range(2):
            assert rel_err(phy.effective_channel(c, k, ch, theta), naive_effective(ch, theta, c, k)) < 1e-12


def test_effective_channel_index_errors(rng):
    ch = random_channels(rng, 2, 2, 2, 2)
    with pytest.raises(IndexError):
        phy.effective_channel(2, 0, ch, np.zeros(2))
    with pytest.raises(IndexError):
        phy.effective_channel(0, -1, ch, np.zeros(2))


def test_effective_channel_oracle_1000(rng):
    for _ in range(1000):
        ch, theta, *_ = _instance(rng)
        M, N, K, C = ch.dims
        c, k = int(rng.integers(C)), int(rng.integers(K))
        assert rel_err(phy.effective_channel(c, k, ch, theta), naive_effective(ch, theta, c, k)) < 1e-10


# ---- rates --------------------------------------------------------------------

def test_zero_beam_zero_rate(rng):
    ch = random_channels(rng, 2, 2, 1, 1)
    assert phy.user_rate(0, 0, ch, np.zeros(2), np.zeros(2), 1.0, 1.0, 1) == 0.0


def test_unit_snr_one_bit():
    ch = ChannelSet(np.ones((1, 1, 1), complex), np.zeros((1, 1, 1), complex), np.zeros((1, 1, 1), complex))
    assert phy.user_rate(0, 0, ch, np.zeros(1), np.ones(1), 1.0, 1.0, 1) == pytest.approx(1.0, abs=1e-15)


def test_user_rate_validates(rng):
    ch = random_channels(rng, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        phy.user_rate(0, 0, ch, np.zeros(1), np.ones(1), 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        phy.user_rate(0, 0, ch, np.zeros(1), np.ones(1), 1.0, -1.0, 1)


def test_user_rate_oracle_1000(rng):
    for _ in range(1000):
        ch, theta, beams, lam, sigma2 = _instance(rng)
        M, N, K, C = ch.dims
        c, k = int(rng.integers(C)), int(rng.integers(K))
        got = phy.user_rate(c, k, ch, theta, beams[:, c], sigma2[k], 10e6, C)
        assert rel_err(got, naive_rate(ch, theta, c, k, beams[:, c], sigma2[k], 10e6, C)) < 1e-10


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_sum_rate_oracle_1000(rng, backend):
    for _ in range(1000):
        ch, theta, beams, lam, sigma2 = _instance(rng)
        M, N, K, C = ch.dims
        expect = [0.0] * K
        for c, k in enumerate(lam):
            expect[k] += naive_rate(ch, theta, c, k, beams[:, c], sigma2[k], 10e6, C)
        total, per_user = phy.sum_rate(lam, ch, theta, beams, sigma2, 10e6, backend=backend)
        assert rel_err(per_user[np.array(expect) > 0], np.array(expect)[np.array(expect) > 0]) < 1e-10
        assert np.all(per_user[np.array(expect) == 0] == 0)
        assert rel_err(total, sum(expect)) < 1e-10


def test_sum_rate_zero_beams(rng):
    ch = random_channels(rng, 2, 3, 2, 3)
    total, per_user = phy.sum_rate(np.array([0, 1, 0]), ch, np.zeros(3), np.zeros((2, 3)), np.ones(2), 1e6)
    assert total == 0.0 and np.all(per_user == 0.0)


def test_sum_rate_single_channel_equals_user_rate(rng):
    ch = random_channels(rng, 3, 2, 2, 1)
    theta, f = rng.uniform(0, 6, 2), rng.standard_normal((3, 1)) + 0j
    total, _ = phy.sum_rate(np.array([1]), ch, theta, f, np.full(2, 0.5), 2e6)
    assert total == pytest.approx(phy.user_rate(0, 1, ch, theta, f[:, 0], 0.5, 2e6, 1), rel=1e-13)


def test_sum_rate_is_sum_of_user_rates(rng):
    ch = random_channels(rng, 2, 3, 2, 2)
    theta = rng.uniform(0, 6, 3)
    beams = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    lam = np.array([1, 0])
    total, _ = phy.sum_rate(lam, ch, theta, beams, np.ones(2), 1e6)
    parts = [phy.user_rate(c, int(lam[c]), ch, theta, beams[:, c], 1.0, 1e6, 2) for c in range(2)]
    assert total == pytest.approx(sum(parts), rel=1e-13)


def test_idle_channel_contributes_nothing(rng):
    ch = random_channels(rng, 2, 2, 2, 3)
    beams = rng.standard_normal((2, 3)) + 0j
    with_idle, per = phy.sum_rate(np.array([0, phy.IDLE, 1]), ch, np.zeros(2), beams, np.ones(2), 1e6)
    zeroed = beams.copy()
    zeroed[:, 1] = 0
    # same total as if channel 1 carried a zero beam
    total, _ = phy.sum_rate(np.array([0, 0, 1]), ch, np.zeros(2), zeroed, np.ones(2), 1e6)
    assert with_idle == pytest.approx(total)


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.floats(1.01, 10.0))
def test_rate_monotone_in_beam_scale(seed, alpha):
    rng = np.random.default_rng(seed)
    ch, theta, beams, lam, sigma2 = _instance(rng)
    _, base = phy.sum_rate(lam, ch, theta, beams, sigma2, 1e6)
    _, scaled = phy.sum_rate(lam, ch, theta, alpha * beams, sigma2, 1e6)
    pos = base > 0
    assert np.all(scaled[pos] > base[pos])


# ---- power ------------------------------------------------------------------

def test_power_simple_cases():
    assert phy.total_power(np.array([0, 1]), np.zeros((3, 2))) == 0.0
    f = np.zeros((4, 1), complex)
    f[2, 0] = 1.0
    assert phy.total_power(np.array([0]), f) == 1.0


def test_total_power_oracle_1000(rng):
    for _ in range(1000):
        _, _, beams, lam, _ = _instance(rng)
        assert rel_err(phy.total_power(lam, beams), naive_power(lam, beams)) < 1e-10


def test_projection_cases(rng):
    beams = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    lam = np.array([0, 1])
    p = phy.total_power(lam, beams)
    assert np.array_equal(phy.project_power(beams, lam, 2 * p), beams)
    halved = phy.project_power(beams, lam, p / 4)
    assert np.allclose(halved, beams / 2, rtol=1e-12)
    assert phy.total_power(lam, halved) == pytest.approx(p / 4, rel=1e-12)
    with pytest.raises(ValueError):
        phy.project_power(beams, lam, 0.0)


def test_projection_oracle_1000(rng):
    for _ in range(1000):
        _, _, beams, lam, _ = _instance(rng)
        p_t = naive_power(lam, beams) * rng.uniform(0.01, 0.99)
        out = phy.project_power(beams, lam, p_t)
        assert abs(naive_power(lam, out) - p_t) <= 1e-9 * p_t
        # idempotent
        assert np.allclose(phy.project_power(out, lam, p_t), out, rtol=1e-12, atol=0)


@settings(max_examples=100)
@given(st.integers(0, 10**6), st.floats(1e-6, 1e3))
def test_projection_never_exceeds_budget(seed, p_t):
    rng = np.random.default_rng(seed)
    _, _, beams, lam, _ = _instance(rng)
    assert phy.total_power(lam, phy.project_power(beams * 10, lam, p_t)) <= p_t * (1 + 1e-9)


def test_projection_zeroes_idle_beams(rng):
    beams = rng.standard_normal((2, 3)) + 0j
    out = phy.project_power(beams, np.array([0, phy.IDLE, 1]), 1e6)
    assert np.all(out[:, 1] == 0)


# ---- assignments, phases, MRT ------------------------------------------------

@settings(max_examples=200)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 10**6))
def test_occupancy_is_exclusive(K, C, seed):
    lam = np.random.default_rng(seed).integers(0, K, C)
    rho = phy.occupancy(phy.check_assignment(lam, K, C), K)
    assert set(np.unique(rho)) <= {0, 1}
    assert np.all(rho.sum(axis=0) == 1)


def test_check_assignment_rejects():
    with pytest.raises(ValueError):
        phy.check_assignment(np.array([0, 2]), 2, 2)
    with pytest.raises(ValueError):
        phy.check_assignment(np.array([0]), 2, 2)
    with pytest.raises(ValueError):
        phy.check_assignment(np.array([0, -1]), 2, 2)
    assert phy.check_assignment(np.array([0, -1]), 2, 2, allow_idle=True).tolist() == [0, -1]


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=64))
def test_unit_modulus(theta):
    assert np.max(np.abs(np.abs(phy.reflection_coefficients(theta)) - 1.0)) <= 1e-12


def test_mrt_equal_power_and_alignment(rng):
    ch = random_channels(rng, 4, 2, 3, 4)
    lam = np.array([2, 0, 1, 2])
    beams = phy.mrt_direct_beams(lam, ch, 8.0)
    assert np.allclose(np.sum(np.abs(beams) ** 2, axis=0), 2.0, rtol=1e-14)
    for c, k in enumerate(lam):
        h = ch.h_bu[:, k, c]
        # matched filter: |h^T f| reaches the Cauchy-Schwarz bound
        assert abs(h @ beams[:, c]) == pytest.approx(np.linalg.norm(h) * np.sqrt(2.0), rel=1e-12)
