"""Channel realisations: geometry, log-distance path loss, Rayleigh/Rician fading."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DUMP_MAGIC = b"IRSCHAN1"
_DUMP_HEADER = struct.Struct("<4qQ")


@dataclass(frozen=True)
class Topology:
    bs_position: tuple = (0.0, 0.0, 30.0)
    irs_position: tuple = (75.0, 100.0, 50.0)
    user_positions: tuple = ((150.0, 50.0, 0.0),)
    user_area: tuple = ((100.0, 0.0, 0.0), (200.0, 100.0, 0.0))

    def __post_init__(self):
        users = np.asarray(self.user_positions, dtype=float)
        if users.ndim != 2 or users.shape[1] != 3 or users.shape[0] < 1:
            raise ValueError("user_positions must be a non-empty list of 3-vectors")
        pts = np.concatenate([users, np.asarray([self.bs_position, self.irs_position], dtype=float)])
        if not np.all(np.isfinite(pts)):
            raise ValueError("positions must be finite")

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    @classmethod
    def random_users(cls, num_users: int, rng: np.random.Generator, **kwargs) -> "Topology":
        """Place `num_users` uniformly inside the user area (z taken from the area corners)."""
        if num_users < 1:
            raise ValueError("need at least one user")
        area = kwargs.get("user_area", cls.user_area)
        lo, hi = np.asarray(area[0], float), np.asarray(area[1], float)
        pos = lo + (hi - lo) * rng.random((num_users, 3))
        return cls(user_positions=tuple(map(tuple, pos)), **kwargs)


@dataclass(frozen=True)
class PathLossModel:
    pl0_db: float = 30.0
    d0: float = 1.0
    tau_bu: float = 3.75
    tau_br: float = 2.2
    tau_ru: float = 2.2

    def __post_init__(self):
        if not self.pl0_db >= 0:
            raise ValueError("pl0_db must be non-negative")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")
        if min(self.tau_bu, self.tau_br, self.tau_ru) <= 0:
            raise ValueError("path-loss exponents must be positive")


@dataclass(frozen=True)
class FadingSpec:
    """Small-scale fading for the BS-IRS and IRS-user links.

    The BS-user link is always Rayleigh. ``kind="rayleigh"`` makes every link
    Rayleigh; ``los_mode`` picks the LOS component of the Rician links.
    """

    kind: str = "rician"
    rician_k_factor: float = 10.0
    los_mode: str = "steering"

    def __post_init__(self):
        if self.kind not in ("rayleigh", "rician"):
            raise ValueError(f"unknown fading kind {self.kind!r}")
        if self.los_mode not in ("steering", "ones"):
            raise ValueError(f"unknown los_mode {self.los_mode!r}")
        if not (np.isfinite(self.rician_k_factor) and self.rician_k_factor >= 0):
            raise ValueError("rician_k_factor must be finite and non-negative")


@dataclass
class ChannelSet:
    """Channel tensors indexed [..., subcarrier].

    h_bu: M x K x C direct BS-user, H_br: M x N x C BS-IRS, h_ru: N x K x C IRS-user.
    """

    h_bu: np.ndarray
    H_br: np.ndarray
    h_ru: np.ndarray
    seed: int = field(default=0, compare=False)

    def __post_init__(self):
        M, K, C = self.h_bu.shape
        N = self.h_ru.shape[0]
        if self.H_br.shape != (M, N, C) or self.h_ru.shape != (N, K, C):
            raise ValueError(
                f"inconsistent shapes h_bu={self.h_bu.shape} H_br={self.H_br.shape} h_ru={self.h_ru.shape}"
            )

    @property
    def dims(self):
        """(M, N, K, C)."""
        M, K, C = self.h_bu.shape
        return M, self.h_ru.shape[0], K, C

    def copy(self) -> "ChannelSet":
        return ChannelSet(self.h_bu.copy(), self.H_br.copy(), self.h_ru.copy(), self.seed)

    def save(self, path) -> None:
        """Write the binary dump: magic, header (M, N, K, C, seed), interleaved re/im float64."""
        with open(path, "wb") as fh:
            fh.write(DUMP_MAGIC)
            fh.write(_DUMP_HEADER.pack(*self.dims, int(self.seed)))
            for t in (self.h_bu, self.H_br, self.h_ru):
                inter = np.empty(t.shape + (2,), dtype="<f8")
                inter[..., 0] = t.real
                inter[..., 1] = t.imag
                fh.write(inter.tobytes())

    @classmethod
    def load(cls, path) -> "ChannelSet":
        raw = Path(path).read_bytes()
        if raw[: len(DUMP_MAGIC)] != DUMP_MAGIC:
            raise ValueError(f"{path}: not a channel dump")
        off = len(DUMP_MAGIC)
        M, N, K, C, seed = _DUMP_HEADER.unpack_from(raw, off)
        off += _DUMP_HEADER.size
        tensors = []
        for shape in ((M, K, C), (M, N, C), (N, K, C)):
            n = int(np.prod(shape)) * 2
            vals = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape + (2,))
            off += n * 8
            tensors.append(vals[..., 0] + 1j * vals[..., 1])
        if off != len(raw):
            raise ValueError(f"{path}: trailing bytes in channel dump")
        return cls(*tensors, seed=seed)


def path_attenuation_db(d, tau, model: PathLossModel = PathLossModel()):
    """Log-distance attenuation ``pl0 + 10 tau log10(d / d0)`` in dB."""
    d = np.asarray(d, dtype=float)
    if not (np.all(np.isfinite(d)) and np.isfinite(tau)):
        raise ValueError("distance and exponent must be finite")
    if np.any(d < model.d0):
        raise ValueError(f"distance below reference distance d0={model.d0}")
    att = model.pl0_db + 10.0 * tau * np.log10(d / model.d0)
    return float(att) if att.ndim == 0 else att


def amplitude_gain(att_db):
    """Linear amplitude factor for an attenuation in dB."""
    return np.sqrt(10.0 ** (-np.asarray(att_db) / 10.0))


def sample_rayleigh(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries of the given shape."""
    if not shape or any(int(s) < 1 for s in shape):
        raise ValueError(f"invalid dimensions {shape}")
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample_rician(rng: np.random.Generator, kappa: float, los: np.ndarray, nlos: np.ndarray | None = None):
    """``sqrt(k/(1+k)) los + sqrt(1/(1+k)) w`` with ``w ~ CN(0, 1)`` of the same shape.

    `nlos` may be passed in to reuse a pre-drawn scattered component.
    """
    if not (np.isfinite(kappa) and kappa >= 0):
        raise ValueError("kappa must be finite and non-negative")
    los = np.asarray(los)
    if nlos is None:
        nlos = sample_rayleigh(rng, *los.shape)
    elif nlos.shape != los.shape:
        raise ValueError(f"shape mismatch {nlos.shape} vs {los.shape}")
    return np.sqrt(kappa / (1.0 + kappa)) * los + np.sqrt(1.0 / (1.0 + kappa)) * nlos


def steering_vector(n: int, direction, axis=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Half-wavelength ULA response along `axis` toward `direction`."""
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    cos_angle = float(np.dot(u, np.asarray(axis, float)))
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def los_components(topology: Topology, M: int, N: int, los_mode: str = "steering"):
    """Unit-modulus LOS matrices (M x N for BS-IRS, N x K for IRS-user)."""
    K = topology.num_users
    if los_mode == "ones":
        return np.ones((M, N), complex), np.ones((N, K), complex)
    bs = np.asarray(topology.bs_position, float)
    irs = np.asarray(topology.irs_position, float)
    users = np.asarray(topology.user_positions, float)
    los_br = np.outer(steering_vector(M, irs - bs), steering_vector(N, bs - irs))
    los_ru = np.stack([steering_vector(N, u - irs) for u in users], axis=1)
    return los_br, los_ru


def link_distances(topology: Topology):
    """(d_bu per user, d_br scalar, d_ru per user) in meters."""
    bs = np.asarray(topology.bs_position, float)
    irs = np.asarray(topology.irs_position, float)
    users = np.asarray(topology.user_positions, float)
    return (
        np.linalg.norm(users - bs, axis=1),
        float(np.linalg.norm(irs - bs)),
        np.linalg.norm(users - irs, axis=1),
    )


def generate_channels(
    topology: Topology,
    model: PathLossModel,
    fading: FadingSpec,
    rng: np.random.Generator,
    M: int,
    N: int,
    C: int,
    seed: int = 0,
) -> ChannelSet:
    """Draw one ChannelSet; small-scale fading is i.i.d. per subcarrier.

    Draw order is fixed (h_bu, then H_br, then h_ru) so the direct channels of a
    given generator state do not depend on N.
    """
    if min(M, N, C) < 1:
        raise ValueError("M, N, C must be >= 1")
    K = topology.num_users
    d_bu, d_br, d_ru = link_distances(topology)
    g_bu = amplitude_gain(path_attenuation_db(d_bu, model.tau_bu, model))
    g_br = amplitude_gain(path_attenuation_db(d_br, model.tau_br, model))
    g_ru = amplitude_gain(path_attenuation_db(d_ru, model.tau_ru, model))

    h_bu = sample_rayleigh(rng, M, K, C) * g_bu[None, :, None]

    nlos_br = sample_rayleigh(rng, M, N, C)
    nlos_ru = sample_rayleigh(rng, N, K, C)
    if fading.kind == "rician":
        los_br, los_ru = los_components(topology, M, N, fading.los_mode)
        k = fading.rician_k_factor
        H_br = sample_rician(rng, k, np.repeat(los_br[:, :, None], C, axis=2), nlos_br)
        h_ru = sample_rician(rng, k, np.repeat(los_ru[:, :, None], C, axis=2), nlos_ru)
    else:
        H_br, h_ru = nlos_br, nlos_ru
    return ChannelSet(h_bu, H_br * g_br, h_ru * g_ru[None, :, None], seed=seed)
