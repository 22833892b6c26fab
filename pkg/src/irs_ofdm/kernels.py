"""Hot numeric kernels with a numba path and a vectorised numpy path.

Both paths compute the same quantities; ``backend=None`` picks numba when it is
enabled (see :mod:`irs_ofdm._jit`), otherwise numpy. Tests cross-check the two.
"""
from __future__ import annotations

import numpy as np

from ._jit import NUMBA_AVAILABLE, USE_NUMBA, njit

LN2 = np.log(2.0)


def _resolve(backend):
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


# ---------------------------------------------------------------- rate matrix

def effective_channels(h_bu, H_br, h_ru, theta, irs=True):
    """Composite channels for every (antenna, user, subcarrier), shape M x K x C."""
    if not irs:
        return h_bu.copy()
    reflect = np.exp(1j * theta)
    return h_bu + np.einsum("mnc,n,nkc->mkc", H_br, reflect, h_ru)


def _rate_matrix_numpy(h_bu, H_br, h_ru, theta, beams, sigma2, bw, irs):
    g = effective_channels(h_bu, H_br, h_ru, theta, irs)
    sig = np.einsum("mkc,mc->ck", g, beams)
    return bw * np.log1p(np.abs(sig) ** 2 / sigma2[None, :]) / LN2


@njit
def _rate_matrix_loops(h_bu, H_br, h_ru, theta, beams, sigma2, bw, irs):
    M, K, C = h_bu.shape
    N = H_br.shape[1]
    refl = np.exp(1j * theta)
    out = np.empty((C, K))
    g = np.empty(M, dtype=np.complex128)
    for c in range(C):
        for k in range(K):
            for m in range(M):
                acc = h_bu[m, k, c]
                if irs:
                    for n in range(N):
                        acc += H_br[m, n, c] * refl[n] * h_ru[n, k, c]
                g[m] = acc
            s = 0j
            for m in range(M):
                s += g[m] * beams[m, c]
            p = s.real * s.real + s.imag * s.imag
            out[c, k] = bw * np.log1p(p / sigma2[k]) / LN2
    return out


def rate_matrix(h_bu, H_br, h_ru, theta, beams, sigma2, bw, irs=True, backend=None):
    """Rate (bits/s) user k would get on subcarrier c with that subcarrier's beam.

    Returns a C x K array; entry [c, k] is ``bw * log2(1 + |g_kc^T f_c|^2 / sigma2_k)``.
    """
    sigma2 = np.ascontiguousarray(sigma2, dtype=np.float64)
    if _resolve(backend) == "numba":
        return _rate_matrix_loops(
            np.ascontiguousarray(h_bu, dtype=np.complex128),
            np.ascontiguousarray(H_br, dtype=np.complex128),
            np.ascontiguousarray(h_ru, dtype=np.complex128),
            np.ascontiguousarray(theta, dtype=np.float64),
            np.ascontiguousarray(beams, dtype=np.complex128),
            sigma2, float(bw), bool(irs),
        )
    return _rate_matrix_numpy(h_bu, H_br, h_ru, theta, beams, sigma2, bw, irs)


# ------------------------------------------------------- assignment scoring

def penalties(user_rates, r_min, b):
    """Per-user min-rate penalty: 0 when met, -R when short, -b when unserved."""
    user_rates = np.asarray(user_rates, dtype=np.float64)
    return np.where(user_rates >= r_min, 0.0, np.where(user_rates > 0.0, -user_rates, -b))


def _best_assignment_numpy(rates, r_min, b, w1, w2):
    C, K = rates.shape
    total = K ** C
    # row i of `assign` is the base-K expansion of i, channel 0 most significant
    assign = np.empty((total, C), dtype=np.int64)
    idx = np.arange(total)
    for c in range(C - 1, -1, -1):
        assign[:, c] = idx % K
        idx //= K
    per_channel = rates[np.arange(C)[None, :], assign]
    user = np.zeros((total, K))
    for k in range(K):
        user[:, k] = np.where(assign == k, per_channel, 0.0).sum(axis=1)
    delta = np.where(user >= r_min, 0.0, np.where(user > 0.0, -user, -b))
    score = w1 * user.sum(axis=1) + w2 * delta.sum(axis=1)
    best = int(np.argmax(score))  # first maximum == lexicographically smallest
    return assign[best].copy(), float(score[best])


@njit
def _best_assignment_loops(rates, r_min, b, w1, w2):
    C, K = rates.shape
    total = K ** C
    digits = np.zeros(C, dtype=np.int64)
    best = np.zeros(C, dtype=np.int64)
    best_score = -np.inf
    user = np.empty(K)
    for _ in range(total):
        user[:] = 0.0
        for c in range(C):
            user[digits[c]] += rates[c, digits[c]]
        score = 0.0
        for k in range(K):
            score += w1 * user[k]
            if user[k] < r_min[k]:
                if user[k] > 0.0:
                    score -= w2 * user[k]
                else:
                    score -= w2 * b[k]
        if score > best_score:
            best_score = score
            best[:] = digits
        c = C - 1
        while c >= 0:
            digits[c] += 1
            if digits[c] < K:
                break
            digits[c] = 0
            c -= 1
    return best, best_score


def best_assignment(rates, r_min, b, w1=1.0, w2=1.0, backend=None):
    """Exhaustively score all K**C assignments and return (best, score).

    `rates` is the C x K matrix from :func:`rate_matrix`. The score is the
    penalised reward ``w1 * sum(R) + w2 * sum(delta)``; ties resolve to the
    lexicographically smallest assignment.
    """
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    C, K = rates.shape
    r_min = np.broadcast_to(np.asarray(r_min, dtype=np.float64), (K,)).copy()
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), (K,)).copy()
    if _resolve(backend) == "numba":
        best, score = _best_assignment_loops(rates, r_min, b, float(w1), float(w2))
        return best, float(score)
    return _best_assignment_numpy(rates, r_min, b, w1, w2)


# ------------------------------------------------------------ optimiser step

def _adam_numpy(p, g, m, v, lr, b1, b2, c1, c2, eps):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    step = np.sqrt(v / c2)
    step += eps
    np.divide(m, step, out=step)
    step *= lr / c1
    p -= step
    return bool(np.isfinite(p.sum()))


# No zero-division checks and relaxed reassociation let the loop vectorise;
# nnan/ninf stay off so a NaN still reaches the returned sum.
@njit(error_model="numpy", fastmath={"nsz", "arcp", "contract", "afn", "reassoc"})
def _adam_loops(p, g, m, v, lr, b1, b2, c1, c2, eps):
    scale = lr / c1
    inv_c2 = 1.0 / c2
    acc = p.dtype.type(0.0)
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        pi = p[i] - scale * mi / (np.sqrt(vi * inv_c2) + eps)
        p[i] = pi
        acc += pi
    return acc


def adam_update(p, g, m, v, lr, b1, b2, t, eps=1e-8, backend=None) -> bool:
    """Bias-corrected Adam step on one parameter array, in place.

    `p`, `m`, `v` must be C-contiguous and share a dtype. Returns False if
    any updated parameter is non-finite.
    """
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    if _resolve(backend) == "numba":
        g = np.ascontiguousarray(g, dtype=p.dtype)
        total = _adam_loops(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), lr, b1, b2, c1, c2, eps)
        return bool(np.isfinite(total))
    return _adam_numpy(p, np.asarray(g, dtype=p.dtype), m, v, lr, b1, b2, c1, c2, eps)
