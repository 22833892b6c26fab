"""FIFO experience replay with uniform sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotReady(Exception):
    """Raised when a batch larger than the buffer contents is requested."""


@dataclass
class Transition:
    s: np.ndarray
    a1: np.ndarray
    a2_raw: np.ndarray
    r: float
    s_next: np.ndarray


@dataclass
class Batch:
    s: np.ndarray
    a1: np.ndarray
    a2_raw: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return len(self.r)

    def __iter__(self):
        for i in range(len(self)):
            yield Transition(self.s[i], self.a1[i], self.a2_raw[i], float(self.r[i]), self.s_next[i])


class ReplayBuffer:
    """Preallocated ring buffer; once full, each push overwrites the oldest entry."""

    def __init__(self, capacity: int, state_dim: int, num_channels: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.a1 = np.zeros((capacity, num_channels), dtype=np.int64)
        self.a2_raw = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        if (
            np.shape(t.s) != self.s.shape[1:]
            or np.shape(t.s_next) != self.s.shape[1:]
            or np.shape(t.a1) != self.a1.shape[1:]
            or np.shape(t.a2_raw) != self.a2_raw.shape[1:]
        ):
            raise ValueError("transition does not match buffer dimensions")
        i = self.cursor
        self.s[i] = t.s
        self.a1[i] = t.a1
        self.a2_raw[i] = t.a2_raw
        self.r[i] = t.r
        self.s_next[i] = t.s_next
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self, n: int) -> bool:
        return self.size >= n

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """Draw `n` stored transitions uniformly with replacement."""
        if not self.ready(n):
            raise NotReady(f"buffer holds {self.size} < {n} transitions")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.s[idx], self.a1[idx], self.a2_raw[idx], self.r[idx], self.s_next[idx])

    def oldest(self) -> Transition:
        i = self.cursor if self.size == self.capacity else 0
        return Transition(self.s[i].copy(), self.a1[i].copy(), self.a2_raw[i].copy(), float(self.r[i]), self.s_next[i].copy())
