"""Fruit Tree: a depth-6 full binary tree with a six-dimensional nutrient
vector at every leaf.

Nodes are heap-ordered: internal nodes 0..62, leaves 63..126.  Actions
descend to the left (2i+1) or right (2i+2) child.  Rewards are zero at
internal transitions; entering a leaf pays its nutrient vector and ends
the episode, so every rollout has exactly ``depth`` steps.

Leaf vectors are seeded pseudo-random nonnegative 6-vectors of unit
Euclidean norm, fixed by the bundled ``leaf_seed``.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidCell
from .base import Env, EnvSpec, StepOutcome

ACTIONS = ("left", "right")


class FruitTree(Env):
    def __init__(self, config: dict):
        super().__init__()
        self.depth = int(config["depth"])
        self.n_internal = 2**self.depth - 1
        self.n_leaves = 2**self.depth
        rng = np.random.default_rng(int(config["leaf_seed"]))
        vecs = np.abs(rng.standard_normal((self.n_leaves, 6)))
        self.leaf_values = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        self.spec = EnvSpec(
            name="ft",
            m=6,
            n_actions=2,
            action_names=ACTIONS,
            max_episode_len=int(config["max_episode_len"]),
            segment_len=int(config["segment_len"]),
            hv_reference=(0.0,) * 6,
            reward_low=(0.0,) * 6,
            reward_high=(1.0,) * 6,
            discrete=True,
            n_states=self.n_internal + self.n_leaves,
        )

    def is_terminal_state(self, state: int) -> bool:
        return int(state) >= self.n_internal

    def state_id(self, state: int) -> int:
        return int(state)

    def node_depth(self, state: int) -> int:
        return int(np.log2(int(state) + 1))

    def describe_state(self, state: int) -> dict:
        return {"node": int(state), "depth": self.node_depth(state)}

    def _initial_state(self) -> int:
        return 0

    def transition(
        self, state: int, action: int, rng: np.random.Generator | None = None
    ) -> StepOutcome:
        node = int(state)
        if node >= self.n_internal:
            raise InvalidCell(f"node {node} is a leaf")
        if action not in (0, 1):
            raise InvalidCell(f"unknown action {action}")
        child = 2 * node + 1 + action
        if child >= self.n_internal:
            reward = tuple(float(v) for v in self.leaf_values[child - self.n_internal])
            return StepOutcome(child, reward, True)
        return StepOutcome(child, (0.0,) * 6, False)

    def leaf_reward(self, leaf: int) -> np.ndarray:
        """Nutrient vector of a leaf node id (63..126 for depth 6)."""
        if leaf < self.n_internal or leaf >= self.spec.n_states:
            raise InvalidCell(f"node {leaf} is not a leaf")
        return self.leaf_values[leaf - self.n_internal].copy()


def ft_step(env: FruitTree, state: int, action: int) -> StepOutcome:
    """Pure single-step transition for a configured Fruit Tree instance."""
    return env.transition(state, action)
