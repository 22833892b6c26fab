"""One DQN per subcarrier, each picking the user for its subcarrier.

The joint K**C discrete action space factorises into C heads of K outputs.
All heads see the same global state and learn from the same shared reward.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Mlp, Optimizer, clip_by_global_norm, copy_parameters
from .phy import IDLE


@dataclass
class MdqnConfig:
    lr: float = 0.002
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    target_sync: int = 200
    batch_size: int = 64
    hidden: tuple = (256, 256, 256)
    optimizer: str = "adam"
    grad_clip: float | None = 1.0
    idle_action: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.target_sync < 1 or self.batch_size < 1:
            raise ValueError("target_sync and batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


class MdqnAgent:
    def __init__(self, state_dim: int, num_users: int, num_channels: int, config: MdqnConfig = MdqnConfig(), rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.config = config
        self.state_dim = state_dim
        self.K, self.C = num_users, num_channels
        self.n_actions = num_users + (1 if config.idle_action else 0)
        sizes = (state_dim, *config.hidden, self.n_actions)
        dtype = np.dtype(config.dtype)
        self.nets = [Mlp(sizes, "linear", rng, dtype) for _ in range(num_channels)]
        self.targets = [net.clone() for net in self.nets]
        self.opts = [Optimizer(net.params, config.optimizer, config.lr) for net in self.nets]
        self.steps = 0

    @property
    def total_outputs(self) -> int:
        return sum(net.sizes[-1] for net in self.nets)

    def epsilon(self, step: int) -> float:
        cfg = self.config
        frac = min(1.0, step / cfg.eps_decay_steps) if cfg.eps_decay_steps > 0 else 1.0
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def q_values(self, state) -> np.ndarray:
        """C x n_actions Q-values of the training networks."""
        return np.stack([net(state) for net in self.nets])

    def _to_users(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return np.where(idx == self.K, IDLE, idx)

    def _to_index(self, users):
        users = np.asarray(users, dtype=np.int64)
        return np.where(users == IDLE, self.K, users)

    def select_discrete(self, state, epsilon: float, rng: np.random.Generator) -> np.ndarray:
        """Epsilon-greedy user per subcarrier; greedy ties go to the lowest index."""
        explore = rng.random(self.C) < epsilon
        random_idx = rng.integers(0, self.n_actions, self.C)
        greedy = self.q_values(state).argmax(axis=1)
        return self._to_users(np.where(explore, random_idx, greedy))

    def td_targets(self, batch, m: int) -> np.ndarray:
        """y = r + gamma * max_a' Q_target_m(s', a'); episodes never terminate."""
        q_next = self.targets[m](batch.s_next)
        return batch.r + self.config.gamma * q_next.max(axis=1)

    def channel_loss(self, batch, m: int, net: Mlp | None = None) -> float:
        net = self.nets[m] if net is None else net
        y = self.td_targets(batch, m)
        q = net(batch.s)[np.arange(len(batch)), self._to_index(batch.a1[:, m])]
        return float(np.mean((y - q) ** 2))

    def train_step(self, batch) -> list:
        """One optimizer step per subcarrier network on the batch-mean squared TD error."""
        n = len(batch)
        rows = np.arange(n)
        losses = []
        for m, (net, opt) in enumerate(zip(self.nets, self.opts)):
            y = self.td_targets(batch, m)
            q, cache = net.forward(batch.s)
            taken = self._to_index(batch.a1[:, m])
            diff = q[rows, taken] - y
            grad_out = np.zeros_like(q)
            grad_out[rows, taken] = 2.0 * diff / n
            grads, _ = net.backward(cache, grad_out)
            opt.step(clip_by_global_norm(grads, self.config.grad_clip))
            losses.append(float(np.mean(diff ** 2)))
        self.steps += 1
        return losses

    def sync_targets(self) -> None:
        for net, tgt in zip(self.nets, self.targets):
            copy_parameters(net, tgt)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for m, (net, tgt) in enumerate(zip(self.nets, self.targets)):
            net.save(d / f"dqn_{m}.bin")
            tgt.save(d / f"dqn_target_{m}.bin")

    def load(self, directory) -> None:
        d = Path(directory)
        for m in range(self.C):
            for mine, name in ((self.nets[m], f"dqn_{m}.bin"), (self.targets[m], f"dqn_target_{m}.bin")):
                copy_parameters(Mlp.load(d / name), mine)
