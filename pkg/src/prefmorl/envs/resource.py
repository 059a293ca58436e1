"""Resource Gathering: collect gold and a gem on a 5x5 grid and bring
them home while evading enemies.

State is (row, col, carrying_gold, carrying_gem).  Entering an enemy
cell kills with probability ``death_prob`` (reward (-1, 0, 0), cargo
lost, episode over).  Entering the home cell while carrying pays
(0, +gold, +gem) and terminates.  All randomness is the single uniform
draw consumed on enemy contact, injected through ``transition`` so every
branch is exactly replayable.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidCell
from .base import Env, EnvSpec, StepOutcome, clip_move

ACTIONS = ("up", "down", "left", "right")


class ResourceGathering(Env):
    def __init__(self, config: dict):
        super().__init__()
        self.rows = int(config["rows"])
        self.cols = int(config["cols"])
        self.home = tuple(config["home"])
        self.gold = tuple(config["gold"])
        self.gem = tuple(config["gem"])
        self.enemies = {tuple(e) for e in config["enemies"]}
        self.death_prob = float(config["death_prob"])
        self.spec = EnvSpec(
            name="rg",
            m=3,
            n_actions=4,
            action_names=ACTIONS,
            max_episode_len=int(config["max_episode_len"]),
            segment_len=int(config["segment_len"]),
            hv_reference=(-1.0, 0.0, 0.0),
            reward_low=(-1.0, 0.0, 0.0),
            reward_high=(0.0, 1.0, 1.0),
            discrete=True,
            n_states=self.rows * self.cols * 4,
        )
        # Dedicated terminal marker: death and delivery end the episode
        # without a distinguished successor cell.
        self._terminal_id = self.spec.n_states

    def state_id(self, state: tuple) -> int:
        if state == "terminal":
            return self._terminal_id
        row, col, g, j = state
        return ((row * self.cols + col) * 2 + g) * 2 + j

    @property
    def n_state_ids(self) -> int:
        return self.spec.n_states + 1

    def is_terminal_state(self, state: tuple) -> bool:
        return state == "terminal"

    def describe_state(self, state: tuple) -> dict:
        if state == "terminal":
            return {"terminal": True}
        row, col, g, j = state
        return {"row": row, "col": col, "has_gold": bool(g), "has_gem": bool(j)}

    def _initial_state(self) -> tuple:
        return (*self.home, 0, 0)

    def transition(
        self,
        state: tuple,
        action: int,
        rng: np.random.Generator | None = None,
        rng_draw: float | None = None,
    ) -> StepOutcome:
        if state == "terminal":
            raise InvalidCell("state is terminal")
        row, col, g, j = state
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise InvalidCell(f"({row}, {col}) is outside the grid")
        if not 0 <= action < 4:
            raise InvalidCell(f"unknown action {action}")
        nrow, ncol = clip_move(row, col, action, self.rows, self.cols)
        if (nrow, ncol) in self.enemies:
            if rng_draw is None:
                if rng is None:
                    raise InvalidCell("enemy contact needs an rng or rng_draw")
                rng_draw = float(rng.random())
            if rng_draw < self.death_prob:
                return StepOutcome("terminal", (-1.0, 0.0, 0.0), True)
        if (nrow, ncol) == self.gold:
            g = 1
        if (nrow, ncol) == self.gem:
            j = 1
        if (nrow, ncol) == self.home and (g or j):
            return StepOutcome("terminal", (0.0, float(g), float(j)), True)
        return StepOutcome((nrow, ncol, g, j), (0.0, 0.0, 0.0), False)


def rg_step(
    env: ResourceGathering, state: tuple, action: int, rng_draw: float
) -> StepOutcome:
    """Pure single-step transition with the enemy draw injected."""
    return env.transition(state, action, rng_draw=rng_draw)
