import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channels
from irs_ofdm import kernels
from irs_ofdm._jit import NUMBA_AVAILABLE


def naive_best(rates, r_min, b, w1, w2):
    C, K = rates.shape
    best, best_score = None, -np.inf
    for lam in itertools.product(range(K), repeat=C):
        user = np.zeros(K)
        for c, k in enumerate(lam):
            user[k] += rates[c, k]
        delta = sum(0.0 if u >= r_min else (-u if u > 0 else -b) for u in user)
        score = w1 * user.sum() + w2 * delta
        if score > best_score:
            best, best_score = lam, score
    return np.array(best), best_score


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_rate_matrix_backends_agree(seed):
    rng = np.random.default_rng(seed)
    M, N, K, C = (int(x) for x in rng.integers(1, 5, 4))
    ch = random_channels(rng, M, N, K, C)
    theta = rng.uniform(0, 2 * np.pi, N)
    beams = rng.standard_normal((M, C)) + 1j * rng.standard_normal((M, C))
    sigma2 = rng.uniform(0.5, 2, K)
    for irs in (True, False):
        a = kernels.rate_matrix(ch.h_bu, ch.H_br, ch.h_ru, theta, beams, sigma2, 3.0, irs, "numpy")
        b = kernels.rate_matrix(ch.h_bu, ch.H_br, ch.h_ru, theta, beams, sigma2, 3.0, irs, "numba")
        assert a.shape == (C, K)
        assert np.allclose(a, b, rtol=1e-12, atol=0)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_best_assignment_matches_enumeration(backend):
    rng = np.random.default_rng(3)
    for _ in range(200):
        K, C = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        rates = rng.uniform(0, 10, (C, K)) * (rng.random((C, K)) > 0.2)
        r_min, b = rng.uniform(0, 8), rng.uniform(0.1, 5)
        lam, score = kernels.best_assignment(rates, r_min, b, 1.0, 2.0, backend)
        ref_lam, ref_score = naive_best(rates, r_min, b, 1.0, 2.0)
        assert score == pytest.approx(ref_score, rel=1e-12, abs=1e-12)
        assert lam.tolist() == ref_lam.tolist()


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_best_assignment_ties_pick_lexicographic_first(backend):
    lam, _ = kernels.best_assignment(np.ones((3, 2)), 0.0, 1.0, 1.0, 1.0, backend)
    assert lam.tolist() == [0, 0, 0]


def test_penalties_branches():
    assert kernels.penalties([5.0, 1.0, 0.0], 2.0, 3.0).tolist() == [0.0, -1.0, -3.0]


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.rate_matrix(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), np.zeros(1), np.zeros((1, 1)), np.ones(1), 1.0, backend="fortran")


def test_disable_flag_selects_numpy():
    code = "from irs_ofdm import _jit, kernels; print(_jit.USE_NUMBA, kernels._resolve(None))"
    env = dict(os.environ, IRS_OFDM_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "numpy"]
    env["IRS_OFDM_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split()[1] == ("numba" if NUMBA_AVAILABLE else "numpy")
