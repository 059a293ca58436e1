"""State-action encoders feeding the learned models.

Discrete tasks use one-hot state and action blocks; the energy task uses
its min-max normalized state vector plus the scaled scalar action.
Discrete encoders also expose the full (state, action) encoding table so
training and relabeling can run one network pass over unique pairs
instead of one per segment step.
"""

from __future__ import annotations

import numpy as np

from .envs.base import Env
from .errors import EncodingError


class DiscreteEncoder:
    def __init__(self, env: Env):
        self.n_states = env.n_state_ids
        self.n_actions = env.spec.n_actions
        self.n_pairs = self.n_states * self.n_actions
        eye_s = np.eye(self.n_states)
        eye_a = np.eye(self.n_actions)
        # Row s * n_actions + a encodes the pair (s, a).
        blocks = [
            np.repeat(eye_s, self.n_actions, axis=0),
            np.tile(eye_a, (self.n_states, 1)),
        ]
        successors = env.successor_ids()
        if successors is not None:
            blocks.append(eye_s[successors.reshape(-1)])
        self._table = np.concatenate(blocks, axis=1)
        self.dim = self._table.shape[1]

    @property
    def state_dim(self) -> int:
        return self.n_states

    def pair_index(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        if states.size and (states.min() < 0 or states.max() >= self.n_states):
            raise EncodingError("state id outside the environment's range")
        if actions.size and (actions.min() < 0 or actions.max() >= self.n_actions):
            raise EncodingError("action id outside the environment's range")
        return states * self.n_actions + actions

    def table(self) -> np.ndarray:
        return self._table

    def encode(self, states, actions) -> np.ndarray:
        return self._table[self.pair_index(states, actions)]

    def encode_states(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        if states.size and (states.min() < 0 or states.max() >= self.n_states):
            raise EncodingError("state id outside the environment's range")
        return np.eye(self.n_states)[states]


class ContinuousEncoder:
    """Energy-task encoder: normalized [storage, renewable, demand,
    price] plus the action level scaled by the action bound."""

    def __init__(self, env):
        walks = env.walks
        self.low = np.array(
            [0.0, walks["renewable"].low, walks["demand"].low, walks["price"].low]
        )
        self.high = np.array(
            [
                env.storage_max,
                walks["renewable"].high,
                walks["demand"].high,
                walks["price"].high,
            ]
        )
        self.levels = np.asarray(env.levels, dtype=np.float64)
        self.action_bound = env.action_bound
        self.dim = 5
        self.state_dim = 4

    def encode(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 1:
            states = states[None, :]
        if states.shape[1] != 4:
            raise EncodingError(f"expected 4 state features, got {states.shape[1]}")
        span = np.where(self.high > self.low, self.high - self.low, 1.0)
        norm = (states - self.low) / span
        acts = self.levels[np.asarray(actions, dtype=np.int64)] / self.action_bound
        return np.concatenate((norm, acts[:, None]), axis=1)

    def encode_states(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 1:
            states = states[None, :]
        span = np.where(self.high > self.low, self.high - self.low, 1.0)
        return (states - self.low) / span


def make_encoder(env: Env):
    if env.spec.discrete:
        return DiscreteEncoder(env)
    return ContinuousEncoder(env)
