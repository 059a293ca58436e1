"""Common environment interface.

Every task is an episodic state machine: ``reset(seed)`` returns the
initial observation, ``step(action)`` advances and returns a
:class:`StepOutcome`.  The pure transition logic also lives on each class
(``transition``) with all stochasticity injected, so every branch is
unit-testable and runs are replayable from (seed, actions).

Discrete tasks use integer state ids as observations; the energy task
uses a tuple of four floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCell


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a task.

    ``segment_len`` is the default preference-segment length H.
    ``reward_low``/``reward_high`` bound each reward component and anchor
    the reward model's output scaling.  ``hv_reference`` is the
    hypervolume reference point (an estimate of the worst return).
    """

    name: str
    m: int
    n_actions: int
    action_names: tuple[str, ...]
    max_episode_len: int
    segment_len: int
    hv_reference: tuple[float, ...]
    reward_low: tuple[float, ...]
    reward_high: tuple[float, ...]
    discrete: bool = True
    n_states: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"need at least 2 objectives, got {self.m}")
        if self.max_episode_len < self.segment_len:
            raise ValueError("max episode length must cover one segment")

    def r_max(self) -> float:
        """Bound on |w . r| over all weights and steps: the largest
        absolute reward component."""
        return max(
            max(abs(lo), abs(hi))
            for lo, hi in zip(self.reward_low, self.reward_high)
        )


@dataclass(frozen=True)
class StepOutcome:
    """Result of one environment step."""

    next_state: object
    reward: tuple[float, ...]
    terminated: bool
    truncated: bool = False

    def reward_array(self) -> np.ndarray:
        return np.asarray(self.reward, dtype=np.float64)


class Env:
    """Base episodic wrapper around a pure transition function.

    Subclasses implement ``transition`` and ``_initial_state`` and may
    override ``_advance_exogenous``.  Instances are single-threaded;
    run distinct instances on distinct threads.
    """

    spec: EnvSpec

    def __init__(self) -> None:
        self._state: object = None
        self._steps = 0
        self._rng = np.random.default_rng(0)
        self._done = True

    def reset(self, seed: int) -> object:
        self._rng = np.random.default_rng(seed)
        self._state = self._initial_state()
        self._steps = 0
        self._done = False
        return self._state

    @property
    def state(self) -> object:
        return self._state

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise InvalidCell("step() called on a finished episode; reset first")
        out = self.transition(self._state, action, rng=self._rng)
        self._steps += 1
        if not out.terminated and self._steps >= self.spec.max_episode_len:
            out = StepOutcome(out.next_state, out.reward, False, truncated=True)
        self._state = out.next_state
        self._done = out.terminated or out.truncated
        return out

    # -- hooks -------------------------------------------------------

    def _initial_state(self) -> object:
        raise NotImplementedError

    def transition(
        self, state: object, action: int, rng: np.random.Generator | None = None
    ) -> StepOutcome:
        raise NotImplementedError

    # -- introspection -----------------------------------------------

    def state_id(self, state: object) -> int:
        """Dense integer id for discrete tasks."""
        raise NotImplementedError

    @property
    def n_state_ids(self) -> int:
        """Size of the dense id range (may exceed n_states when a task
        needs a synthetic terminal id)."""
        return self.spec.n_states

    def describe_state(self, state: object) -> dict:
        """Human-readable field dict used by the labeling service."""
        raise NotImplementedError

    def is_terminal_state(self, state: object) -> bool:
        raise NotImplementedError

    def successor_ids(self) -> "np.ndarray | None":
        """(n_state_ids, n_actions) matrix of successor state ids for
        deterministic tasks; None where unavailable.  Encoders use it to
        pool reward evidence across actions entering the same state."""
        return None


def env_reset(env: Env, seed: int) -> object:
    """Reset ``env`` with a seed and return the initial observation."""
    return env.reset(seed)


def clip_move(row: int, col: int, action: int, n_rows: int, n_cols: int) -> tuple[int, int]:
    """Apply one of up/down/left/right with border clipping."""
    dr, dc = ((-1, 0), (1, 0), (0, -1), (0, 1))[action]
    return (
        min(max(row + dr, 0), n_rows - 1),
        min(max(col + dc, 0), n_cols - 1),
    )
