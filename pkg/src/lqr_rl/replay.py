"""Replay memory for ordinary and semi-MDP transitions."""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMemoryError, ValidationError


@dataclass
class Transition:
    state: np.ndarray
    observation: np.ndarray
    action: np.ndarray
    reward: float                 # discounted sum over the dt steps taken
    next_state: np.ndarray
    next_observation: np.ndarray
    dt: int = 1
    terminal: bool = False
    absorbing: bool = False
    abstract_index: int = 0

    def validate(self):
        if int(self.dt) < 1:
            raise ValidationError(f"dt must be >= 1, got {self.dt}")
        if self.absorbing and not self.terminal:
            raise ValidationError("absorbing transitions must also be terminal")
        if not math.isfinite(self.reward):
            raise ValidationError(f"non-finite reward {self.reward}")


@dataclass
class Batch:
    """Column-stacked view of a minibatch."""
    state: np.ndarray
    observation: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    next_observation: np.ndarray
    dt: np.ndarray
    terminal: np.ndarray
    absorbing: np.ndarray
    abstract_index: np.ndarray

    def __len__(self):
        return self.reward.shape[0]


_ARRAY_FIELDS = ("state", "observation", "action", "next_state", "next_observation")
_SCALAR_FIELDS = (("reward", float), ("dt", np.int64), ("terminal", bool),
                  ("absorbing", bool), ("abstract_index", np.int64))


def accumulate_smdp(rewards, gamma, steps_in_region=None, episode_ended_inside=False):
    """Fold the rewards of a temporally extended action.

    Returns ``(sum_k gamma**k * rewards[k], dt, absorbing)``; the sum runs in
    ascending ``k``.
    """
    rewards = list(rewards)
    if not rewards:
        raise ValidationError("an extended action needs at least one reward")
    if steps_in_region is not None and steps_in_region != len(rewards):
        raise ValidationError(f"{len(rewards)} rewards for {steps_in_region} steps")
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    for k, r in enumerate(rewards):
        total += gamma ** k * r
    return total, len(rewards), bool(episode_ended_inside)


class ReplayMemory:
    """FIFO store with uniform sampling and nearest-neighbour lookup.

    Storage is a ring of preallocated numpy arrays, created on the first push.
    ``capacity=None`` means unbounded (arrays grow by doubling).
    """

    def __init__(self, capacity=None, seed=None, rng=None):
        if capacity is not None and capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self._data = None
        self._size = 0
        self._start = 0    # physical index of the oldest item

    def __len__(self):
        return self._size

    def _allocate(self, t, n):
        self._data = {}
        for name in _ARRAY_FIELDS:
            v = np.asarray(getattr(t, name), dtype=float)
            self._data[name] = np.zeros((n, v.shape[0]))
        for name, dtype in _SCALAR_FIELDS:
            self._data[name] = np.zeros(n, dtype=dtype)

    def _alloc_len(self):
        return 0 if self._data is None else self._data["reward"].shape[0]

    def push(self, t):
        t.validate()
        if self._data is None:
            self._allocate(t, self.capacity or 1024)
        n = self._alloc_len()
        if self.capacity is None and self._size == n:
            for name, arr in self._data.items():
                grown = np.zeros((2 * n,) + arr.shape[1:], dtype=arr.dtype)
                grown[:n] = arr
                self._data[name] = grown
            n *= 2
        if self._size < n:
            idx = (self._start + self._size) % n
            self._size += 1
        else:
            idx = self._start
            self._start = (self._start + 1) % n
        for name in _ARRAY_FIELDS:
            self._data[name][idx] = getattr(t, name)
        for name, _ in _SCALAR_FIELDS:
            self._data[name][idx] = getattr(t, name)

    def _physical(self, logical):
        n = self._alloc_len()
        return (self._start + np.asarray(logical)) % n

    def _require_items(self):
        if self._size == 0:
            raise EmptyMemoryError("replay memory is empty")

    def batch(self, logical):
        idx = self._physical(logical)
        return Batch(**{name: arr[idx] for name, arr in self._data.items()})

    def get(self, i):
        if not -self._size <= i < self._size:
            raise IndexError(i)
        p = int(self._physical(i % self._size))
        d = self._data
        return Transition(
            state=d["state"][p].copy(), observation=d["observation"][p].copy(),
            action=d["action"][p].copy(), reward=float(d["reward"][p]),
            next_state=d["next_state"][p].copy(),
            next_observation=d["next_observation"][p].copy(),
            dt=int(d["dt"][p]), terminal=bool(d["terminal"][p]),
            absorbing=bool(d["absorbing"][p]), abstract_index=int(d["abstract_index"][p]))

    def __getitem__(self, i):
        return self.get(i)

    def __iter__(self):
        return (self.get(i) for i in range(self._size))

    def sample_indices(self, n):
        self._require_items()
        return self.rng.integers(0, self._size, size=n)

    def sample_batch(self, n):
        return self.batch(self.sample_indices(n))

    def sample_minibatch(self, n):
        """Draw ``n`` transitions uniformly with replacement."""
        return [self.get(int(i)) for i in self.sample_indices(n)]

    def neighbor_indices(self, query, k, weights=None):
        self._require_items()
        if k < 1:
            raise ValidationError("k must be >= 1")
        states = self._data["state"][self._physical(np.arange(self._size))]
        diff = states - np.asarray(query, dtype=float)
        if weights is not None:
            diff = diff * np.asarray(weights, dtype=float)
        dist = np.einsum("ij,ij->i", diff, diff)
        # stable sort keeps older transitions first among equal distances
        return np.argsort(dist, kind="stable")[:min(k, self._size)]

    def nearest_neighbors(self, query, k, weights=None):
        return [self.get(int(i)) for i in self.neighbor_indices(query, k, weights)]

    def dump_csv(self, path):
        """Write all transitions as CSV, oldest first."""
        if self._size == 0:
            raise EmptyMemoryError("nothing to dump")
        t0 = self.get(0)
        ns, na = len(t0.state), len(t0.action)
        header = ([f"s{i}" for i in range(ns)] + [f"a{i}" for i in range(na)]
                  + ["abstract_index", "reward"] + [f"s'{i}" for i in range(ns)]
                  + ["dt", "terminal", "absorbing"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t in self:
                w.writerow([repr(float(v)) for v in t.state]
                           + [repr(float(v)) for v in t.action]
                           + [t.abstract_index, repr(t.reward)]
                           + [repr(float(v)) for v in t.next_state]
                           + [t.dt, int(t.terminal), int(t.absorbing)])
