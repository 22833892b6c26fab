"""Signal model: effective channels, rates, power accounting and projection.

Conventions: beams are an M x C complex array (one beamformer per subcarrier),
an assignment is a length-C integer vector naming the user on each subcarrier
(``-1`` marks an idle subcarrier), phases are N real angles in radians.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .channel import ChannelSet

IDLE = -1


def reflection_coefficients(theta) -> np.ndarray:
    """Unit-modulus IRS coefficients e^{j theta}."""
    return np.exp(1j * np.asarray(theta, dtype=float))


def wrap_phase(theta):
    return np.mod(theta, 2.0 * np.pi)


def check_assignment(assignment, K: int, C: int, allow_idle: bool = False) -> np.ndarray:
    lam = np.asarray(assignment)
    if lam.shape != (C,) or not np.issubdtype(lam.dtype, np.integer):
        raise ValueError(f"assignment must be {C} integers, got {lam!r}")
    lo = IDLE if allow_idle else 0
    if lam.min() < lo or lam.max() >= K:
        raise ValueError(f"assignment entries out of range: {lam}")
    return lam


def occupancy(assignment, K: int) -> np.ndarray:
    """Indicator rho[k, c] = 1 iff user k occupies subcarrier c."""
    lam = np.asarray(assignment)
    return (lam[None, :] == np.arange(K)[:, None]).astype(int)


def effective_channel(c: int, k: int, ch: ChannelSet, theta, irs: bool = True) -> np.ndarray:
    """M-vector g with received amplitude g^T f for user k on subcarrier c."""
    M, N, K, C = ch.dims
    if not (0 <= c < C and 0 <= k < K):
        raise IndexError(f"subcarrier {c} / user {k} out of range")
    g = ch.h_bu[:, k, c].copy()
    if irs:
        g = g + ch.H_br[:, :, c] @ (reflection_coefficients(theta) * ch.h_ru[:, k, c])
    return g


def _check_link(sigma2, bandwidth):
    if np.any(np.asarray(sigma2) <= 0) or not np.all(np.isfinite(sigma2)):
        raise ValueError("noise power must be positive and finite")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")


def user_rate(c, k, ch, theta, f_c, sigma2: float, bandwidth: float, num_channels: int, irs=True) -> float:
    """Rate (bits/s) of user k on subcarrier c: (B/C) log2(1 + |g^T f|^2 / sigma2)."""
    _check_link(sigma2, bandwidth)
    if num_channels < 1:
        raise ValueError("num_channels must be >= 1")
    amp = effective_channel(c, k, ch, theta, irs) @ np.asarray(f_c)
    return float(bandwidth / num_channels * np.log1p(abs(amp) ** 2 / sigma2) / np.log(2.0))


def sum_rate(assignment, ch: ChannelSet, theta, beams, sigma2, bandwidth: float, irs=True, backend=None):
    """Total rate and the per-user rate vector for one assignment.

    Returns ``(total, per_user)`` in bits/s.
    """
    M, N, K, C = ch.dims
    lam = check_assignment(assignment, K, C, allow_idle=True)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,))
    _check_link(sigma2, bandwidth)
    rates = kernels.rate_matrix(ch.h_bu, ch.H_br, ch.h_ru, theta, beams, sigma2, bandwidth / C, irs, backend)
    per_user = np.zeros(K)
    used = lam != IDLE
    np.add.at(per_user, lam[used], rates[np.arange(C)[used], lam[used]])
    return float(per_user.sum()), per_user


def total_power(assignment, beams) -> float:
    """Transmit power (W) summed over occupied subcarriers."""
    lam = np.asarray(assignment)
    beams = np.asarray(beams)
    used = lam != IDLE
    return float(np.sum(np.abs(beams[:, used]) ** 2))


def project_power(beams, assignment, p_t: float) -> np.ndarray:
    """Scale every beam by one common factor so total power is at most p_t."""
    if not p_t > 0:
        raise ValueError("p_t must be positive")
    beams = np.array(beams, dtype=complex)
    lam = np.asarray(assignment)
    beams[:, lam == IDLE] = 0.0
    p = total_power(lam, beams)
    if p <= p_t:
        return beams
    return beams * np.sqrt(p_t / p)


def mrt_direct_beams(assignment, ch: ChannelSet, p_t: float) -> np.ndarray:
    """Maximum-ratio beams toward each assigned user's direct channel, power p_t / C each."""
    M, N, K, C = ch.dims
    lam = check_assignment(assignment, K, C)
    h = ch.h_bu[:, lam, np.arange(C)]
    return np.sqrt(p_t / C) * h.conj() / np.linalg.norm(h, axis=0, keepdims=True)
