"""Deterministic actor-critic for the continuous sub-action.

The actor maps the state to ``2MC + N`` tanh-bounded values (beam re/im pairs
and IRS phases, or phases only in fixed-beamforming mode). The critic scores
the state together with the full hybrid action: one-hot assignment followed by
the raw continuous vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Mlp, Optimizer, clip_by_global_norm, copy_parameters, soft_update


@dataclass
class DdpgConfig:
    actor_lr: float = 0.001
    critic_lr: float = 0.002
    gamma: float = 0.99
    noise_start: float = 0.2
    noise_decay: float = 0.999
    noise_floor: float = 0.01
    target_sync: int = 200
    # Polyak rate applied every step when set; hard copies every target_sync otherwise
    soft_tau: float | None = None
    batch_size: int = 64
    hidden: tuple = (256, 256)
    optimizer: str = "adam"
    grad_clip: float | None = 1.0
    dtype: str = "float32"

    def __post_init__(self):
        if not (self.actor_lr > 0 and self.critic_lr > 0):
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if min(self.noise_start, self.noise_floor) < 0:
            raise ValueError("noise scales must be non-negative")
        if self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")


def one_hot_batch(a1, num_users: int) -> np.ndarray:
    """(n, C) assignments -> (n, C*K) one-hot rows; idle (-1) entries stay zero."""
    a1 = np.asarray(a1, dtype=np.int64)
    n, C = a1.shape
    out = np.zeros((n, C * num_users))
    rows, cols = np.nonzero(a1 >= 0)
    out[rows, cols * num_users + a1[rows, cols]] = 1.0
    return out


class DdpgAgent:
    def __init__(self, state_dim: int, num_users: int, num_channels: int, action_dim: int, config: DdpgConfig = DdpgConfig(), rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.config = config
        self.K, self.C = num_users, num_channels
        self.state_dim, self.action_dim = state_dim, action_dim
        self.discrete_dim = num_users * num_channels
        dtype = np.dtype(config.dtype)
        h = tuple(config.hidden)
        self.actor = Mlp((state_dim, *h, action_dim), "tanh", rng, dtype)
        self.critic = Mlp((state_dim + self.discrete_dim + action_dim, *h, 1), "linear", rng, dtype)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.actor_opt = Optimizer(self.actor.params, config.optimizer, config.actor_lr)
        self.critic_opt = Optimizer(self.critic.params, config.optimizer, config.critic_lr)
        self._action_cols = slice(state_dim + self.discrete_dim, state_dim + self.discrete_dim + action_dim)
        self.steps = 0

    def noise_sigma(self, step: int) -> float:
        cfg = self.config
        return max(cfg.noise_floor, cfg.noise_start * cfg.noise_decay ** step)

    def act(self, state) -> np.ndarray:
        return self.actor(state).astype(np.float64)

    def select_continuous(self, state, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
        """Actor output plus N(0, sigma^2) noise, clamped to [-1, 1]."""
        a = self.act(state)
        noise = rng.standard_normal(a.shape) * noise_sigma
        return np.clip(a + noise, -1.0, 1.0)

    def critic_input(self, s, onehot, a) -> np.ndarray:
        return np.hstack([np.asarray(s, self.critic.dtype), np.asarray(onehot, self.critic.dtype), np.asarray(a, self.critic.dtype)])

    def q_value(self, s, a1, a2_raw, critic: Mlp | None = None) -> np.ndarray:
        critic = self.critic if critic is None else critic
        s = np.atleast_2d(s)
        onehot = one_hot_batch(np.atleast_2d(a1), self.K)
        return critic(self.critic_input(s, onehot, np.atleast_2d(a2_raw)))[:, 0]

    def critic_targets(self, batch) -> np.ndarray:
        """y = r + gamma * Q'(s', onehot(a1), mu'(s')) with the stored assignment reused."""
        a_next = self.target_actor(batch.s_next)
        onehot = one_hot_batch(batch.a1, self.K)
        q_next = self.target_critic(self.critic_input(batch.s_next, onehot, a_next))[:, 0]
        return batch.r + self.config.gamma * q_next

    def critic_loss(self, batch) -> float:
        y = self.critic_targets(batch)
        return float(np.mean((y - self.q_value(batch.s, batch.a1, batch.a2_raw)) ** 2))

    def critic_train_step(self, batch) -> float:
        y = self.critic_targets(batch)
        x = self.critic_input(batch.s, one_hot_batch(batch.a1, self.K), batch.a2_raw)
        q, cache = self.critic.forward(x)
        diff = q[:, 0] - y
        grads, _ = self.critic.backward(cache, (2.0 * diff / len(diff))[:, None])
        self.critic_opt.step(clip_by_global_norm(grads, self.config.grad_clip))
        return float(np.mean(diff ** 2))

    def policy_objective(self, batch, actor: Mlp | None = None) -> float:
        """Batch mean of Q(s, onehot(a1), mu(s)) under the training critic."""
        actor = self.actor if actor is None else actor
        a = actor(batch.s)
        return float(np.mean(self.q_value(batch.s, batch.a1, a)))

    def actor_gradient(self, batch):
        """Parameter gradients of -J (mean critic value of the actor's actions)."""
        n = len(batch)
        a, cache_a = self.actor.forward(batch.s)
        x = self.critic_input(batch.s, one_hot_batch(batch.a1, self.K), a)
        q, cache_c = self.critic.forward(x)
        dq_da = self.critic.input_gradient(cache_c, np.full((n, 1), -1.0 / n), self._action_cols)
        grads, _ = self.actor.backward(cache_a, dq_da)
        return grads, float(np.mean(q))

    def actor_train_step(self, batch) -> float:
        grads, mean_q = self.actor_gradient(batch)
        self.actor_opt.step(clip_by_global_norm(grads, self.config.grad_clip))
        self.steps += 1
        return mean_q

    def sync_targets(self) -> None:
        copy_parameters(self.actor, self.target_actor)
        copy_parameters(self.critic, self.target_critic)

    def soft_sync(self) -> None:
        soft_update(self.actor, self.target_actor, self.config.soft_tau)
        soft_update(self.critic, self.target_critic, self.config.soft_tau)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.actor.save(d / "actor.bin")
        self.critic.save(d / "critic.bin")
        self.target_actor.save(d / "actor_target.bin")
        self.target_critic.save(d / "critic_target.bin")

    def load(self, directory) -> None:
        d = Path(directory)
        for net, name in (
            (self.actor, "actor.bin"),
            (self.critic, "critic.bin"),
            (self.target_actor, "actor_target.bin"),
            (self.target_critic, "critic_target.bin"),
        ):
            copy_parameters(Mlp.load(d / name), net)
