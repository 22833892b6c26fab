"""Episodic MDP around the IRS-assisted OFDM downlink."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import phy
from .kernels import penalties
from .channel import (
    ChannelSet,
    FadingSpec,
    PathLossModel,
    Topology,
    amplitude_gain,
    generate_channels,
    link_distances,
    path_attenuation_db,
)


class ConstraintViolation(RuntimeError):
    """An executed action broke one of the hard constraints (power, unit modulus, occupancy)."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass
class EnvConfig:
    M: int = 6
    N: int = 16
    K: int = 3
    C: int = 4
    bandwidth: float = 10e6
    noise_dbm: float = -169.0
    # overrides noise_dbm when set: noise density times per-subcarrier bandwidth
    noise_dbm_per_hz: Optional[float] = None
    p_t_dbm: float = 35.0
    r_min: Optional[float] = None
    r_min_fraction: float = 0.1
    w1: float = 1.0
    w2: float = 1.0
    b: Optional[float] = None
    steps_per_episode: int = 100
    channel_refresh: str = "episode"
    irs_enabled: bool = True
    beamforming: str = "learned"
    allow_idle: bool = False
    pl0_db: float = 30.0
    d0: float = 1.0
    tau_bu: float = 3.75
    tau_br: float = 2.2
    tau_ru: float = 2.2
    fading: str = "rician"
    kappa: float = 10.0
    los_mode: str = "steering"
    bs_position: tuple = (0.0, 0.0, 30.0)
    irs_position: tuple = (75.0, 100.0, 50.0)
    user_positions: Optional[tuple] = None
    user_area: tuple = ((100.0, 0.0, 0.0), (200.0, 100.0, 0.0))

    def __post_init__(self):
        if min(self.M, self.N, self.K, self.C) < 1:
            raise ValueError("M, N, K, C must all be >= 1")
        if self.C < self.K:
            raise ValueError(f"C={self.C} < K={self.K}: every user cannot hold a subcarrier")
        if not (self.w1 > 0 and self.w2 > 0):
            raise ValueError("reward weights must be positive")
        if self.b is not None and not self.b > 0:
            raise ValueError("penalty b must be positive")
        if self.r_min is not None and self.r_min < 0:
            raise ValueError("r_min must be non-negative")
        if self.bandwidth <= 0 or self.steps_per_episode < 1:
            raise ValueError("bandwidth and steps_per_episode must be positive")
        if self.channel_refresh not in ("episode", "step", "frozen"):
            raise ValueError(f"unknown channel_refresh {self.channel_refresh!r}")
        if self.beamforming not in ("learned", "fixed"):
            raise ValueError(f"unknown beamforming mode {self.beamforming!r}")
        if self.user_positions is not None and len(self.user_positions) != self.K:
            raise ValueError("user_positions must list exactly K users")
        # validates the individual fields
        self.path_loss_model()
        self.fading_spec()

    # ---- derived quantities -------------------------------------------------
    def path_loss_model(self) -> PathLossModel:
        return PathLossModel(self.pl0_db, self.d0, self.tau_bu, self.tau_br, self.tau_ru)

    def fading_spec(self) -> FadingSpec:
        return FadingSpec(self.fading, self.kappa, self.los_mode)

    @property
    def p_t(self) -> float:
        return float(dbm_to_watts(self.p_t_dbm))

    @property
    def sigma2(self) -> np.ndarray:
        if self.noise_dbm_per_hz is not None:
            s = dbm_to_watts(self.noise_dbm_per_hz) * self.bandwidth / self.C
        else:
            s = dbm_to_watts(self.noise_dbm)
        return np.full(self.K, float(s))

    @property
    def area_center(self) -> np.ndarray:
        lo, hi = (np.asarray(p, float) for p in self.user_area)
        return 0.5 * (lo + hi)

    def reference_gains(self):
        """Large-scale amplitudes (BS-user, BS-IRS, IRS-user) at the user-area centre."""
        topo = Topology(self.bs_position, self.irs_position, (tuple(self.area_center),), self.user_area)
        d_bu, d_br, d_ru = link_distances(topo)
        pl = self.path_loss_model()
        return (
            float(amplitude_gain(path_attenuation_db(d_bu[0], self.tau_bu, pl))),
            float(amplitude_gain(path_attenuation_db(d_br, self.tau_br, pl))),
            float(amplitude_gain(path_attenuation_db(d_ru[0], self.tau_ru, pl))),
        )

    def capacity_estimate(self) -> float:
        """Equal-share rate of one user at the area centre: C/K subcarriers, p_t/C each, MRT gain M."""
        g_bu, _, _ = self.reference_gains()
        snr = self.M * (self.p_t / self.C) * g_bu ** 2 / self.sigma2[0]
        return (self.C / self.K) * (self.bandwidth / self.C) * np.log2(1.0 + snr)

    @property
    def r_min_vector(self) -> np.ndarray:
        r = self.r_min if self.r_min is not None else self.r_min_fraction * self.capacity_estimate()
        return np.full(self.K, float(r))

    @property
    def b_vector(self) -> np.ndarray:
        if self.b is not None:
            return np.full(self.K, float(self.b))
        return self.r_min_vector.copy()

    @property
    def rate_scale(self) -> float:
        """Normaliser for rates fed to the networks: (B/C) log2(1 + p_t / sigma2)."""
        return float(self.bandwidth / self.C * np.log2(1.0 + self.p_t / self.sigma2[0]))

    @property
    def continuous_dim(self) -> int:
        beams = 2 * self.M * self.C if self.beamforming == "learned" else 0
        return beams + self.N


@dataclass(frozen=True)
class StateLayout:
    """Slices of the flat state vector, in storage order."""

    M: int
    N: int
    K: int
    C: int

    @property
    def sizes(self):
        M, N, K, C = self.M, self.N, self.K, self.C
        return {
            "assignment": C * K,
            "beams": 2 * M * C,
            "phases": N,
            "rates": K,
            "h_bu": 2 * M * K * C,
            "H_br": 2 * M * N * C,
            "h_ru": 2 * N * K * C,
        }

    @property
    def length(self) -> int:
        return sum(self.sizes.values())

    def slices(self):
        out, start = {}, 0
        for name, n in self.sizes.items():
            out[name] = slice(start, start + n)
            start += n
        return out


def _split_complex(z):
    z = np.asarray(z)
    return np.concatenate([z.real.ravel(), z.imag.ravel()])


def _join_complex(v, shape):
    n = v.size // 2
    return (v[:n] + 1j * v[n:]).reshape(shape)


def one_hot_assignment(assignment, K: int) -> np.ndarray:
    """Flat C*K one-hot encoding (row c holds the user of subcarrier c; idle rows stay zero)."""
    lam = np.asarray(assignment)
    out = np.zeros((lam.shape[-1], K))
    used = lam >= 0
    out[np.flatnonzero(used), lam[used]] = 1.0
    return out.ravel()


@dataclass
class Action:
    a1: np.ndarray
    a2_raw: np.ndarray
    beams: np.ndarray
    theta: np.ndarray


@dataclass
class StepOutcome:
    reward: float
    next_state: np.ndarray
    per_user_rates: np.ndarray
    sum_rate: float
    min_rate_violations: int
    done: bool


def compute_reward(per_user_rates, config: EnvConfig) -> float:
    """w1 * sum(R) + w2 * sum(delta) with the three-branch min-rate penalty."""
    rates = np.asarray(per_user_rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    delta = penalties(rates, config.r_min_vector, config.b_vector)
    return float(config.w1 * rates.sum() + config.w2 * delta.sum())


def discounted_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    total, disc = 0.0, 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return float(total)


class IrsOfdmEnv:
    """Single-actor environment; call reset() then step() sequentially.

    Channel realisations come from child seeds of one SeedSequence, one child
    per draw, so runs that share a seed see the same direct channels even when
    N or the IRS switch differ.
    """

    def __init__(self, config: EnvConfig, seed=0, channel_seed=None):
        self.config = config
        self._seeds = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        placement_seed, self._channel_seeds = self._seeds.spawn(2)
        if channel_seed is not None:
            # keeps the user placement of `seed` but draws channels from another stream
            self._channel_seeds = (
                channel_seed if isinstance(channel_seed, np.random.SeedSequence) else np.random.SeedSequence(channel_seed)
            )
        if config.user_positions is not None:
            users = tuple(map(tuple, config.user_positions))
            self.topology = Topology(config.bs_position, config.irs_position, users, config.user_area)
        else:
            self.topology = Topology.random_users(
                config.K,
                np.random.default_rng(placement_seed),
                bs_position=config.bs_position,
                irs_position=config.irs_position,
                user_area=config.user_area,
            )
        self.layout = StateLayout(config.M, config.N, config.K, config.C)
        self._ref = config.reference_gains()
        self.channels: Optional[ChannelSet] = None
        self.t = 0
        self.episode = 0
        self._beam_scale = np.sqrt(config.p_t / (2 * config.M * config.C))

    @property
    def state_dim(self) -> int:
        return self.layout.length

    def draw_channels(self) -> ChannelSet:
        cfg = self.config
        child = self._channel_seeds.spawn(1)[0]
        return generate_channels(
            self.topology,
            cfg.path_loss_model(),
            cfg.fading_spec(),
            np.random.default_rng(child),
            cfg.M,
            cfg.N,
            cfg.C,
            seed=int(child.generate_state(1)[0]),
        )

    # ---- state ---------------------------------------------------------------
    def encode_state(self, assignment, beams, theta, rates, channels: ChannelSet) -> np.ndarray:
        cfg = self.config
        g_bu, g_br, g_ru = self._ref
        parts = [
            one_hot_assignment(assignment, cfg.K) if assignment is not None else np.zeros(cfg.C * cfg.K),
            _split_complex(beams),
            np.asarray(theta, float),
            np.asarray(rates, float) / cfg.rate_scale,
            _split_complex(channels.h_bu / g_bu),
            _split_complex(channels.H_br / g_br),
            _split_complex(channels.h_ru / g_ru),
        ]
        return np.concatenate(parts)

    def decode_state(self, state):
        """Inverse of encode_state; returns a dict of the components."""
        cfg = self.config
        sl = self.layout.slices()
        g_bu, g_br, g_ru = self._ref
        M, N, K, C = cfg.M, cfg.N, cfg.K, cfg.C
        onehot = state[sl["assignment"]].reshape(C, K)
        assignment = np.where(onehot.any(axis=1), onehot.argmax(axis=1), phy.IDLE)
        return {
            "assignment": assignment,
            "beams": _join_complex(state[sl["beams"]], (M, C)),
            "phases": state[sl["phases"]].copy(),
            "rates": state[sl["rates"]] * cfg.rate_scale,
            "h_bu": _join_complex(state[sl["h_bu"]], (M, K, C)) * g_bu,
            "H_br": _join_complex(state[sl["H_br"]], (M, N, C)) * g_br,
            "h_ru": _join_complex(state[sl["h_ru"]], (N, K, C)) * g_ru,
        }

    def reset(self, channels: Optional[ChannelSet] = None) -> np.ndarray:
        cfg = self.config
        if channels is not None:
            if channels.dims != (cfg.M, cfg.N, cfg.K, cfg.C):
                raise ValueError(f"channel dims {channels.dims} do not match config")
            self.channels = channels
        elif self.channels is None or cfg.channel_refresh != "frozen":
            self.channels = self.draw_channels()
        self.t = 0
        self.episode += 1
        self.state = self.encode_state(
            None, np.zeros((cfg.M, cfg.C), complex), np.zeros(cfg.N), np.zeros(cfg.K), self.channels
        )
        return self.state

    # ---- actions -------------------------------------------------------------
    def decode_action(self, a1, a2_raw) -> Action:
        """Map raw network outputs in [-1, 1] into a feasible action."""
        cfg = self.config
        a1 = phy.check_assignment(np.asarray(a1, dtype=np.int64), cfg.K, cfg.C, cfg.allow_idle)
        a2 = np.asarray(a2_raw, dtype=float)
        if a2.shape != (cfg.continuous_dim,):
            raise ValueError(f"a2_raw must have length {cfg.continuous_dim}, got {a2.shape}")
        if np.any(np.abs(a2) > 1.0 + 1e-9):
            raise ValueError("a2_raw entries must lie in [-1, 1]")
        theta = phy.wrap_phase(np.pi * (a2[-cfg.N:] + 1.0))
        if cfg.beamforming == "learned":
            pairs = a2[: 2 * cfg.M * cfg.C].reshape(cfg.C, cfg.M, 2)
            beams = self._beam_scale * (pairs[..., 0] + 1j * pairs[..., 1]).T
        else:
            if self.channels is None:
                raise RuntimeError("reset() before decoding fixed-beamforming actions")
            beams = phy.mrt_direct_beams(a1, self.channels, cfg.p_t)
        beams = phy.project_power(beams, a1, cfg.p_t)
        return Action(a1, a2, beams, theta)

    def check_constraints(self, action: Action) -> None:
        cfg = self.config
        phy.check_assignment(action.a1, cfg.K, cfg.C, cfg.allow_idle)
        p = phy.total_power(action.a1, action.beams)
        if p > cfg.p_t * (1.0 + 1e-9):
            raise ConstraintViolation(f"transmit power {p} W exceeds budget {cfg.p_t} W")
        modulus = np.abs(phy.reflection_coefficients(action.theta))
        if np.max(np.abs(modulus - 1.0)) > 1e-12:
            raise ConstraintViolation("IRS coefficient off the unit circle")
        if not np.all(np.isfinite(action.beams)):
            raise ConstraintViolation("non-finite beamformer")

    def rates(self, action: Action):
        cfg = self.config
        return phy.sum_rate(
            action.a1, self.channels, action.theta, action.beams, cfg.sigma2, cfg.bandwidth, cfg.irs_enabled
        )

    def step(self, action: Action) -> StepOutcome:
        cfg = self.config
        if self.channels is None:
            raise RuntimeError("step() before reset()")
        if self.t >= cfg.steps_per_episode:
            raise RuntimeError("episode finished; call reset()")
        self.check_constraints(action)
        total, per_user = self.rates(action)
        reward = compute_reward(per_user, cfg)
        violations = int(np.sum(per_user < cfg.r_min_vector))
        self.t += 1
        if cfg.channel_refresh == "step":
            self.channels = self.draw_channels()
        self.state = self.encode_state(action.a1, action.beams, action.theta, per_user, self.channels)
        return StepOutcome(reward, self.state, per_user, total, violations, self.t >= cfg.steps_per_episode)


def write_trace(path, outcomes) -> None:
    """Dump per-step outcomes of one episode as CSV."""
    outcomes = list(outcomes)
    K = len(outcomes[0].per_user_rates) if outcomes else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "reward", "sum_rate"] + [f"rate_user_{k}" for k in range(K)] + ["violations"])
        for i, o in enumerate(outcomes):
            w.writerow([i, repr(o.reward), repr(o.sum_rate)] + [repr(float(r)) for r in o.per_user_rates] + [o.min_rate_violations])
