"""Deep Sea Treasure: a 10x11 grid where a submarine trades time against
treasure value.

The seabed follows the treasure cells: column c is water from row 0 down
to the treasure row of that column (columns left of the first treasure
share its depth).  Moving into the seabed or past a border leaves the
submarine in place.  Every step costs -1 time; entering a treasure cell
pays its value and ends the episode.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidCell
from .base import Env, EnvSpec, StepOutcome, clip_move

ACTIONS = ("up", "down", "left", "right")


class DeepSeaTreasure(Env):
    def __init__(self, config: dict):
        super().__init__()
        self.rows = int(config["rows"])
        self.cols = int(config["cols"])
        self.treasures = {
            (int(t["row"]), int(t["col"])): float(t["value"])
            for t in config["treasures"]
        }
        # Seabed depth per column; columns before the first treasure
        # column inherit its depth so the start cell has water below it.
        depth = {}
        first_col = min(c for _, c in self.treasures)
        first_depth = max(r for r, c in self.treasures if c == first_col)
        for c in range(self.cols):
            rows_here = [r for r, tc in self.treasures if tc == c]
            depth[c] = max(rows_here) if rows_here else first_depth
        self.seabed = depth
        max_value = max(self.treasures.values())
        max_len = int(config["max_episode_len"])
        # Worst time return: -1 per step, discounted at the default gamma,
        # over a full-length episode.
        gamma = float(config.get("reference_gamma", 0.99))
        worst_time = -(1.0 - gamma**max_len) / (1.0 - gamma)
        self.spec = EnvSpec(
            name="dst",
            m=2,
            n_actions=4,
            action_names=ACTIONS,
            max_episode_len=max_len,
            segment_len=int(config["segment_len"]),
            hv_reference=(0.0, worst_time),
            reward_low=(0.0, -1.0),
            reward_high=(max_value, 0.0),
            discrete=True,
            n_states=self.rows * self.cols,
        )

    # -- geometry ------------------------------------------------------

    def is_water(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols and row <= self.seabed[col]

    def is_terminal_state(self, state: int) -> bool:
        return divmod(int(state), self.cols) in self.treasures

    def state_id(self, state: int) -> int:
        return int(state)

    def cell(self, state: int) -> tuple[int, int]:
        return divmod(int(state), self.cols)

    def describe_state(self, state: int) -> dict:
        row, col = self.cell(state)
        return {"row": row, "col": col}

    # -- dynamics ------------------------------------------------------

    def _initial_state(self) -> int:
        return 0  # cell (0, 0)

    def transition(
        self, state: int, action: int, rng: np.random.Generator | None = None
    ) -> StepOutcome:
        row, col = self.cell(state)
        if not self.is_water(row, col):
            raise InvalidCell(f"({row}, {col}) is outside the water grid")
        if (row, col) in self.treasures:
            raise InvalidCell(f"({row}, {col}) is terminal")
        if not 0 <= action < 4:
            raise InvalidCell(f"unknown action {action}")
        nrow, ncol = clip_move(row, col, action, self.rows, self.cols)
        if not self.is_water(nrow, ncol):
            nrow, ncol = row, col
        value = self.treasures.get((nrow, ncol), 0.0)
        terminated = (nrow, ncol) in self.treasures
        return StepOutcome(nrow * self.cols + ncol, (value, -1.0), terminated)


    def successor_ids(self) -> np.ndarray:
        out = np.arange(self.spec.n_states)[:, None].repeat(4, axis=1)
        for row in range(self.rows):
            for col in range(self.cols):
                s = row * self.cols + col
                if not self.is_water(row, col) or (row, col) in self.treasures:
                    continue
                for a in range(4):
                    out[s, a] = self.transition(s, a).next_state
        return out


def dst_step(env: DeepSeaTreasure, state: int, action: int) -> StepOutcome:
    """Pure single-step transition for a configured DST instance."""
    return env.transition(state, action)
