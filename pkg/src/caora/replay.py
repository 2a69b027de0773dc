"""Fixed-capacity FIFO experience store backed by preallocated arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One stored step: normalized state/action, scalar reward, successor."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer of transitions; insertion beyond capacity evicts the oldest."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._s = np.zeros((capacity, state_dim), dtype=np.float64)
        self._a = np.zeros((capacity, action_dim), dtype=np.float64)
        self._r = np.zeros((capacity, 1), dtype=np.float64)
        self._s_next = np.zeros((capacity, state_dim), dtype=np.float64)
        self._done = np.zeros((capacity, 1), dtype=np.float64)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, s: np.ndarray, a: np.ndarray, r: float, s_next: np.ndarray, done: bool) -> None:
        i = self._cursor
        self._s[i] = s
        self._a[i] = a
        self._r[i, 0] = r
        self._s_next[i] = s_next
        self._done[i, 0] = 1.0 if done else 0.0
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if batch_size > self._size:
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer holding {self._size}"
            )
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self._s[idx].copy(),
            self._a[idx].copy(),
            self._r[idx].copy(),
            self._s_next[idx].copy(),
            self._done[idx].copy(),
        )

    def snapshot(self) -> List[Transition]:
        """Stored transitions in insertion order, oldest first."""
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._cursor + k) % self.capacity for k in range(self.capacity)]
        return [
            Transition(
                s=self._s[i].copy(),
                a=self._a[i].copy(),
                r=float(self._r[i, 0]),
                s_next=self._s_next[i].copy(),
                done=bool(self._done[i, 0]),
            )
            for i in order
        ]
