"""Transition replay with reward relabeling, and the preference buffer.

Both buffers are column-packed numpy storage behind object APIs: the
trainer pushes :class:`Transition` values and samples either materialized
transitions or raw index batches (the fast path).  One writer and
concurrent readers are supported; push, sample, and relabel are atomic
with respect to each other.

Query sampling implements the query-policy aligned strategy as a recency
window: candidate segments are contiguous length-H slices that start
inside the most recent fraction of the buffer and never span episode
boundaries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .core import PreferenceRecord, Segment, Weight
from .errors import (
    DimensionMismatch,
    EmptyBuffer,
    InsufficientData,
    LengthMismatch,
)

DEFAULT_CAPACITY = 100_000


@dataclass(frozen=True)
class Transition:
    """One environment step as stored for Q-learning.

    ``reward_estimate`` is in reward-model units and is rewritten by
    relabeling; ``true_reward`` is provenance for scripted labeling and
    oracle runs and is never shown to the learner.
    """

    state: object
    action: int
    next_state: object
    reward_estimate: np.ndarray
    weight: Weight
    episode_id: int
    step_index: int
    order: int = -1
    terminal: bool = False
    true_reward: np.ndarray | None = None
    weight_id: int = -1


class ReplayBuffer:
    """FIFO transition store.

    ``state_dim=None`` stores integer state ids (discrete tasks);
    otherwise states are float vectors of that dimension.
    """

    def __init__(self, capacity: int, m: int, state_dim: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.m = m
        self.state_dim = state_dim
        self._lock = threading.RLock()
        self._size = 0
        self._head = 0  # next write position
        self._order = 0
        if state_dim is None:
            self._states = np.zeros(capacity, dtype=np.int64)
            self._next_states = np.zeros(capacity, dtype=np.int64)
        else:
            self._states = np.zeros((capacity, state_dim), dtype=np.float64)
            self._next_states = np.zeros((capacity, state_dim), dtype=np.float64)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros((capacity, m), dtype=np.float64)
        self._true_rewards = np.zeros((capacity, m), dtype=np.float64)
        self._weights = np.zeros((capacity, m), dtype=np.float64)
        self._weight_ids = np.full(capacity, -1, dtype=np.int64)
        self._episodes = np.zeros(capacity, dtype=np.int64)
        self._steps = np.zeros(capacity, dtype=np.int64)
        self._orders = np.zeros(capacity, dtype=np.int64)
        self._terminals = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self._size

    # -- writing -------------------------------------------------------

    def push(self, t: Transition) -> None:
        """Store one transition, evicting the oldest at capacity."""
        reward = np.asarray(t.reward_estimate, dtype=np.float64)
        if reward.shape != (self.m,):
            raise DimensionMismatch(
                f"reward estimate has shape {reward.shape}, expected ({self.m},)"
            )
        with self._lock:
            i = self._head
            if self.state_dim is None:
                self._states[i] = int(t.state)
                self._next_states[i] = int(t.next_state)
            else:
                self._states[i] = np.asarray(t.state, dtype=np.float64)
                self._next_states[i] = np.asarray(t.next_state, dtype=np.float64)
            self._actions[i] = t.action
            self._rewards[i] = reward
            self._true_rewards[i] = (
                reward if t.true_reward is None
                else np.asarray(t.true_reward, dtype=np.float64)
            )
            self._weights[i] = t.weight.as_array()
            self._weight_ids[i] = t.weight_id
            self._episodes[i] = t.episode_id
            self._steps[i] = t.step_index
            self._orders[i] = self._order
            self._terminals[i] = t.terminal
            self._order += 1
            self._head = (self._head + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    # -- reading -------------------------------------------------------

    def _chron(self) -> np.ndarray:
        """Storage positions in chronological (insertion) order."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._head) % self.capacity

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform-with-replacement storage positions (fast path)."""
        if self._size == 0:
            raise EmptyBuffer("replay buffer is empty")
        return rng.integers(0, self._size, size=batch)

    def _materialize(self, i: int) -> Transition:
        state: object
        if self.state_dim is None:
            state = int(self._states[i])
            next_state = int(self._next_states[i])
        else:
            state = tuple(float(v) for v in self._states[i])
            next_state = tuple(float(v) for v in self._next_states[i])
        return Transition(
            state=state,
            action=int(self._actions[i]),
            next_state=next_state,
            reward_estimate=self._rewards[i].copy(),
            weight=Weight(tuple(float(v) for v in self._weights[i])),
            episode_id=int(self._episodes[i]),
            step_index=int(self._steps[i]),
            order=int(self._orders[i]),
            terminal=bool(self._terminals[i]),
            true_reward=self._true_rewards[i].copy(),
            weight_id=int(self._weight_ids[i]),
        )

    def sample_minibatch(self, batch: int, seed: int) -> list[Transition]:
        """Uniform with replacement, deterministic for a fixed seed."""
        rng = np.random.default_rng(seed)
        with self._lock:
            idx = self.sample_indices(batch, rng)
            return [self._materialize(int(i)) for i in idx]

    def transitions(self) -> list[Transition]:
        """All stored transitions in insertion order."""
        with self._lock:
            return [self._materialize(int(i)) for i in self._chron()]

    # -- preference queries ---------------------------------------------

    def _eligible_slices(self, H: int, recency_window: float) -> np.ndarray:
        """(rank, length) pairs of candidate slices inside the window.

        A slice either spans H in-episode steps, or runs from its start
        to a terminal step of its episode (a shorter "episode tail").
        Tails are what make constant per-step objectives identifiable:
        two windows of equal span can then differ in how many steps they
        actually accrue.  Truncation cuts are arbitrary, so tails ending
        at a truncated step do not qualify.
        """
        n = self._size
        if n == 0:
            return np.empty((0, 2), dtype=np.int64)
        chron = self._chron()
        episodes = self._episodes[chron]
        terminals = self._terminals[chron]
        boundaries = np.flatnonzero(np.diff(episodes))
        ends = np.append(boundaries, n - 1)
        starts = np.append(0, boundaries + 1)
        ep_end = np.repeat(ends, ends - starts + 1)  # per-rank episode end
        ranks = np.arange(n)
        len_to_end = ep_end - ranks + 1
        full_ok = len_to_end >= H
        tail_ok = (~full_ok) & terminals[ep_end]
        threshold = int(np.ceil((1.0 - recency_window) * n))
        eligible = (full_ok | tail_ok) & (ranks >= threshold)
        return np.stack(
            (ranks[eligible], np.minimum(H, len_to_end[eligible])), axis=1
        )

    def _segment_at(self, rank: int, length: int) -> tuple[Segment, np.ndarray]:
        chron = self._chron()
        idx = chron[rank : rank + length]
        if self.state_dim is None:
            states = [int(v) for v in self._states[idx]]
        else:
            states = [tuple(float(x) for x in row) for row in self._states[idx]]
        steps = tuple(
            (s, int(a)) for s, a in zip(states, self._actions[idx])
        )
        seg = Segment(
            steps,
            episode_id=int(self._episodes[idx[0]]),
            start=int(self._steps[idx[0]]),
        )
        return seg, self._true_rewards[idx].copy()

    def sample_query_pairs(
        self,
        n_s: int,
        H: int,
        recency_window: float,
        seed: int,
        visit_counts: np.ndarray | None = None,
        terminal_pair_fraction: float = 0.0,
    ) -> list[tuple[Segment, Segment]]:
        """Sample ``n_s`` pairs of distinct slices from the recency
        window.  Slices fill an H-step comparison window: they carry H
        steps, or fewer when their episode ended first.

        With ``visit_counts`` (a (state, action) visitation matrix) both
        slices of each pair are drawn proportionally to the rarity of
        their least-visited step, so comparisons between seldom-seen
        segments get labeled instead of drowning in the bulk.

        ``terminal_pair_fraction`` routes that share of the pairs to
        terminal-ending slices on both sides: comparisons between
        episode endings rank outcomes directly and carry the densest
        signal.  Raises InsufficientData when fewer than two distinct
        slices qualify."""
        rng = np.random.default_rng(seed)
        with self._lock:
            slices = self._eligible_slices(H, recency_window)
            k = len(slices)
            if k < 2:
                raise InsufficientData(
                    f"need at least 2 segments of window {H} in the window, found {k}"
                )
            chron = self._chron()
            rarity = None
            if visit_counts is not None and self.state_dim is None:
                per_rank = visit_counts[self._states[chron], self._actions[chron]]
                rare = np.array(
                    [per_rank[rank : rank + length].min() for rank, length in slices]
                )
                rarity = 1.0 / np.sqrt(1.0 + rare)

            def draw_pairs(count, pool):
                if count <= 0 or len(pool) < 2:
                    return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
                if rarity is not None:
                    p = rarity[pool] / rarity[pool].sum()
                    a = pool[rng.choice(len(pool), size=count, p=p)]
                    b = pool[rng.choice(len(pool), size=count, p=p)]
                else:
                    a = pool[rng.integers(0, len(pool), size=count)]
                    b = pool[rng.integers(0, len(pool), size=count)]
                clash = a == b
                if clash.any():
                    # Shift clashes to the pool's next slice.
                    pos = np.searchsorted(pool, b[clash])
                    b[clash] = pool[(pos + 1) % len(pool)]
                return a, b

            every = np.arange(k)
            terminals = self._terminals[chron]
            ends_terminal = np.array(
                [terminals[rank + length - 1] for rank, length in slices]
            )
            n_terminal = int(round(n_s * terminal_pair_fraction))
            ta, tb = draw_pairs(n_terminal, every[ends_terminal])
            ga, gb = draw_pairs(n_s - len(ta), every)
            first = np.concatenate((ta, ga))
            second = np.concatenate((tb, gb))
            pairs = []
            for (ra, la), (rb, lb) in zip(slices[first], slices[second]):
                seg_a, _ = self._segment_at(int(ra), int(la))
                seg_b, _ = self._segment_at(int(rb), int(lb))
                pairs.append((seg_a, seg_b))
            return pairs

    def ground_truth(self, segment: Segment) -> np.ndarray:
        """Per-step true rewards (H, m) for a segment sampled from this
        buffer, located by episode provenance."""
        if segment.episode_id is None or segment.start is None:
            raise InsufficientData("segment carries no buffer provenance")
        with self._lock:
            chron = self._chron()
            episodes = self._episodes[chron]
            pos0 = int(np.searchsorted(episodes, segment.episode_id, side="left"))
            if pos0 >= self._size or episodes[pos0] != segment.episode_id:
                raise InsufficientData(
                    f"episode {segment.episode_id} is no longer in the buffer"
                )
            first_step = int(self._steps[chron[pos0]])
            rank = pos0 + (segment.start - first_step)
            idx = chron[rank : rank + len(segment)]
            if (
                len(idx) < len(segment)
                or self._episodes[idx[0]] != segment.episode_id
                or self._steps[idx[0]] != segment.start
            ):
                raise InsufficientData("segment steps are no longer in the buffer")
            return self._true_rewards[idx].copy()

    # -- relabeling ------------------------------------------------------

    def relabel_all(self, model) -> None:
        """Replace every reward estimate with ``model``'s prediction for
        the stored (state, action); everything else is untouched."""
        with self._lock:
            if self._size == 0:
                return
            idx = np.arange(self._size) if self._size < self.capacity else np.arange(self.capacity)
            states = self._states[idx]
            actions = self._actions[idx]
            self._rewards[idx] = model.predict_reward_batch(states, actions)

    # -- fast-path column access (single consumer holding no reference
    #    across writer activity) ----------------------------------------

    def gather(self, idx: np.ndarray) -> "Batch":
        with self._lock:
            return Batch(
                states=self._states[idx],
                actions=self._actions[idx],
                next_states=self._next_states[idx],
                rewards=self._rewards[idx],
                weights=self._weights[idx],
                weight_ids=self._weight_ids[idx],
                terminals=self._terminals[idx],
            )


@dataclass
class Batch:
    """Column view of a sampled minibatch."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    weights: np.ndarray
    weight_ids: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> "Batch":
        if not transitions:
            raise EmptyBuffer("empty transition list")
        discrete = isinstance(transitions[0].state, (int, np.integer))
        conv = (lambda s: int(s)) if discrete else (lambda s: tuple(s))
        return cls(
            states=np.asarray([conv(t.state) for t in transitions]),
            actions=np.asarray([t.action for t in transitions], dtype=np.int64),
            next_states=np.asarray([conv(t.next_state) for t in transitions]),
            rewards=np.asarray([t.reward_estimate for t in transitions], dtype=np.float64),
            weights=np.asarray([t.weight.values for t in transitions], dtype=np.float64),
            weight_ids=np.asarray([t.weight_id for t in transitions], dtype=np.int64),
            terminals=np.asarray([t.terminal for t in transitions], dtype=bool),
        )


class PreferenceBuffer:
    """Append-only store of labeled segment pairs.

    Rows are packed into padded arrays as they arrive.  All records
    share one comparison window H (the longest segment seen first sets
    it); a segment shorter than the window — an episode tail — is padded
    and masked, contributing nothing past its end.  Every tenth record
    is held out as the validation split for reported accuracy.
    """

    VALIDATION_STRIDE = 10

    def __init__(self, window: int | None = None):
        self._lock = threading.RLock()
        self._records: list[PreferenceRecord] = []
        self.H: int | None = window
        self.m: int | None = None
        self._discrete: bool | None = None
        self._s0: list = []
        self._a0: list = []
        self._m0: list = []
        self._s1: list = []
        self._a1: list = []
        self._m1: list = []
        self._w: list = []
        self._labels: list = []

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> list[PreferenceRecord]:
        with self._lock:
            return list(self._records)

    def _pad(self, seg: Segment) -> tuple[tuple, tuple, tuple]:
        pad = self.H - len(seg)
        states = seg.states
        actions = seg.actions + (0,) * pad
        mask = (1.0,) * len(seg) + (0.0,) * pad
        if pad:
            filler = states[-1]
            states = states + (filler,) * pad
        return states, actions, mask

    def append(self, record: PreferenceRecord) -> None:
        with self._lock:
            longest = max(len(record.first), len(record.second))
            if self.H is None:
                self.H = longest
            elif longest > self.H:
                raise LengthMismatch(
                    f"buffer window is {self.H} steps, got a {longest}-step segment"
                )
            if self.m is None:
                self.m = record.weight.m
                self._discrete = isinstance(
                    record.first.steps[0][0], (int, np.integer)
                )
            self._records.append(record)
            for seg, s_list, a_list, m_list in (
                (record.first, self._s0, self._a0, self._m0),
                (record.second, self._s1, self._a1, self._m1),
            ):
                states, actions, mask = self._pad(seg)
                s_list.append(states)
                a_list.append(actions)
                m_list.append(mask)
            self._w.append(record.weight.values)
            self._labels.append(record.label)

    def extend(self, records) -> None:
        for r in records:
            self.append(r)

    def packed(self) -> dict[str, np.ndarray]:
        """Training arrays: padded segment states/actions with masks,
        weights, labels."""
        with self._lock:
            if not self._records:
                raise EmptyBuffer("preference buffer is empty")
            sdtype = np.int64 if self._discrete else np.float64
            return {
                "s0": np.asarray(self._s0, dtype=sdtype),
                "a0": np.asarray(self._a0, dtype=np.int64),
                "mask0": np.asarray(self._m0, dtype=np.float64),
                "s1": np.asarray(self._s1, dtype=sdtype),
                "a1": np.asarray(self._a1, dtype=np.int64),
                "mask1": np.asarray(self._m1, dtype=np.float64),
                "w": np.asarray(self._w, dtype=np.float64),
                "label": np.asarray(self._labels, dtype=np.float64),
            }

    def split_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(train, validation) row indices; every tenth row validates."""
        n = len(self._records)
        idx = np.arange(n)
        val = idx[self.VALIDATION_STRIDE - 1 :: self.VALIDATION_STRIDE]
        train = np.setdiff1d(idx, val)
        return train, val


def push(buffer: ReplayBuffer, t: Transition) -> None:
    """Store a transition (module-level alias of ReplayBuffer.push)."""
    buffer.push(t)


def sample_minibatch(buffer: ReplayBuffer, batch: int, seed: int) -> list[Transition]:
    return buffer.sample_minibatch(batch, seed)


def sample_query_pairs(
    buffer: ReplayBuffer, n_s: int, H: int, recency_window: float, seed: int
) -> list[tuple[Segment, Segment]]:
    return buffer.sample_query_pairs(n_s, H, recency_window, seed)


def relabel_all(buffer: ReplayBuffer, model) -> None:
    buffer.relabel_all(model)
