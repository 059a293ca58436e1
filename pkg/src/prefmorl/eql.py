"""Envelope multi-objective Q-learning over a learned or true reward.

The Q function maps (state, action, weight) to an m-vector.  Backups run
through the optimality filter: at the next state take the Q vector of
the (action, candidate weight) pair maximizing the query weight's
scalarization.  Maximizing over candidate weights as well as actions is
what lets value learned under one trade-off inform every other.

Two realizations: a tabular array over (state, action, weight-grid
point) for the small discrete tasks, and a feedforward network over
(state encoding, weight) for the energy task.  The training loop follows
the collect / query / reward-train / relabel / TD cycle; with the oracle
flag the reward model is bypassed and true rewards are stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DiscountConfig,
    Segment,
    Weight,
    default_eval_grid,
    make_weight,
    sample_weights,
)
from .encoders import make_encoder
from .envs.base import Env
from .errors import EmptyBatch
from .metrics import FrontierEstimate, hypervolume, rollout_return
from .nnet import MLP, Adam
from .pareto import brute_force_frontier
from .replay import Batch, PreferenceBuffer, ReplayBuffer, Transition
from .reward_model import RewardModel, train_reward_model
from .teacher import TeacherQuery

AUX_SQUARED_WEIGHT = 0.5  # weight of the component-wise anchor term


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the training loop.

    Defaults follow the reference settings (feedback every 500
    iterations, 300 queries with 10 weights per round, gamma 0.99,
    batch 256, learning rate 3e-4, target tau 1e-4, one million steps);
    desk-scale runs override counts through the task presets.
    """

    feedback_interval: int = 500  # K
    queries_per_round: int = 300  # N_s
    weights_per_round: int = 10  # N_w
    learning_start: int = 1_000  # T_0
    gamma: float = 0.99
    batch_size: int = 256
    learning_rate: float = 3e-4
    target_tau: float = 1e-4
    total_timesteps: int = 1_000_000
    envelope_weight_samples: int = 8
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_fraction: float = 0.5
    realization: str = "tabular"  # or "mlp"
    weight_grid_resolution: int | None = None
    tabular_step: float = 0.25
    # Linear per-step anneal target; None keeps the step size constant.
    # Ending small lets near-tie action values settle.
    tabular_step_final: float | None = None
    reward_gradient_steps: int = 100
    reward_learning_rate: float = 3e-4
    reward_batch_size: int = 256
    reward_weight_decay: float = 1e-5
    # Draw query-pair slices by inverse visitation of their rarest step
    # (needs the novelty critic's counts): labels then reach seldom-seen
    # cells instead of re-ranking the bulk.
    rarity_queries: bool = False
    # Share of each round's pairs drawn from terminal-ending slices on
    # both sides; endings compare outcomes head to head.
    terminal_pair_fraction: float = 0.0
    # Consolidation before the final evaluation: one long reward fit on
    # the full preference buffer, a relabel, then TD-only refinement so
    # the values catch up with the last relabel (the loop's own gradient
    # steps, scheduled once more after collection ends).
    final_reward_steps: int = 0
    final_td_steps: int = 0
    recency_window: float = 0.1
    replay_capacity: int = 100_000
    eval_every: int = 5_000
    eval_weight_samples: int = 101
    hindsight_weight_fraction: float = 0.5
    segment_len: int | None = None
    optimistic_init: float = 0.0
    # Behavior-side novelty critic: a separate scalar value function is
    # TD-trained online on count-decayed bonuses beta * decay^N(s, a)
    # and added to the scalarized task value when the behavior policy
    # picks actions.  It never enters the learned Q (the envelope's sup
    # over candidate weights would turn any value inflation contagious);
    # its influence anneals linearly to zero by ``novelty_horizon`` of
    # training.  Zero beta disables it; tasks whose deep states a random
    # walk cannot reach need it at desk-scale step budgets.
    novelty_beta: float = 0.0
    novelty_decay: float = 0.9
    novelty_gamma: float = 0.9
    novelty_step_size: float = 0.3
    novelty_horizon: float = 0.6
    # Fraction of behavior steps that follow the novelty critic alone
    # while it is active; decouples exploration from the (possibly still
    # wrong) task values.
    novelty_mix: float = 0.5

    def novelty_influence(self, step: int) -> float:
        horizon = max(1.0, self.novelty_horizon * self.total_timesteps)
        return max(0.0, 1.0 - step / horizon)

    def __post_init__(self) -> None:
        positive = (
            "feedback_interval",
            "queries_per_round",
            "weights_per_round",
            "learning_start",
            "batch_size",
            "total_timesteps",
            "envelope_weight_samples",
            "replay_capacity",
            "eval_every",
            "eval_weight_samples",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.target_tau <= 1.0:
            raise ValueError("target_tau must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.realization not in ("tabular", "mlp"):
            raise ValueError(f"unknown realization {self.realization!r}")

    def discount(self) -> DiscountConfig:
        return DiscountConfig(self.gamma)

    def epsilon_at(self, step: int) -> float:
        horizon = max(1, int(self.total_timesteps * self.epsilon_anneal_fraction))
        frac = min(1.0, step / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def tabular_step_at(self, step: int) -> float:
        if self.tabular_step_final is None:
            return self.tabular_step
        frac = min(1.0, step / self.total_timesteps)
        return self.tabular_step + frac * (self.tabular_step_final - self.tabular_step)


# ---------------------------------------------------------------------------
# Q function realizations
# ---------------------------------------------------------------------------


class TabularQ:
    """Dense table over (state id, action, weight-grid point) -> m-vector.

    ``init_value`` fills the fresh table; a value above the best
    attainable scalarized return drives systematic exploration (greedy
    prefers untried cells until experience pulls them down)."""

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        grid: list[Weight],
        init_value: float = 0.0,
    ):
        self.n_states = n_states
        self.n_actions = n_actions
        self.grid_weights = list(grid)
        self.grid = np.stack([w.as_array() for w in grid])
        self.m = self.grid.shape[1]
        self.table = np.full((n_states, n_actions, len(grid), self.m), float(init_value))
        self._exact = {w.values: i for i, w in enumerate(grid)}

    def grid_index(self, w: Weight) -> int:
        """Exact grid lookup, else nearest grid point."""
        hit = self._exact.get(w.values)
        if hit is not None:
            return hit
        return int(np.argmin(((self.grid - w.as_array()) ** 2).sum(axis=1)))

    def q_values(self, state, w: Weight) -> np.ndarray:
        """(n_actions, m) at the weight's grid point."""
        return self.table[int(state), :, self.grid_index(w)]

    def vector(self, state, action: int, w: Weight) -> np.ndarray:
        return self.table[int(state), int(action), self.grid_index(w)]

    def copy(self) -> "TabularQ":
        clone = TabularQ(self.n_states, self.n_actions, self.grid_weights)
        clone.table[...] = self.table
        return clone

    def soft_update_from(self, other: "TabularQ", tau: float) -> None:
        if other is self:
            return
        self.table *= 1.0 - tau
        self.table += tau * other.table

    # -- persistence --

    def save_arrays(self) -> dict:
        return {"kind": "tabular", "table": self.table, "grid": self.grid}

    @classmethod
    def from_arrays(cls, data: dict) -> "TabularQ":
        grid = [make_weight(row) for row in data["grid"]]
        q = cls(data["table"].shape[0], data["table"].shape[1], grid)
        q.table[...] = data["table"]
        return q


class MLPQ:
    """Network over (state encoding, weight) emitting n_actions * m values."""

    def __init__(self, env: Env, m: int, hidden=(128, 128), seed: int = 0):
        self.encoder = make_encoder(env)
        self.m = m
        self.n_actions = env.spec.n_actions
        in_dim = self.encoder.state_dim + m
        rng = np.random.default_rng(seed)
        self.net = MLP([in_dim, *hidden, self.n_actions * m], rng, zero_output=True)

    def _inputs(self, states: np.ndarray, weights: np.ndarray) -> np.ndarray:
        enc = self.encoder.encode_states(states)
        return np.concatenate((enc, weights), axis=1)

    def q_values_batch(self, states: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """(batch, n_actions, m)."""
        out = self.net.predict(self._inputs(states, weights))
        return out.reshape(len(out), self.n_actions, self.m)

    def q_values(self, state, w: Weight) -> np.ndarray:
        states = np.asarray([state], dtype=np.float64)
        return self.q_values_batch(states, w.as_array()[None, :])[0]

    def vector(self, state, action: int, w: Weight) -> np.ndarray:
        return self.q_values(state, w)[int(action)]

    def copy(self) -> "MLPQ":
        clone = object.__new__(MLPQ)
        clone.encoder = self.encoder
        clone.m = self.m
        clone.n_actions = self.n_actions
        clone.net = self.net.copy()
        return clone

    def soft_update_from(self, other: "MLPQ", tau: float) -> None:
        if other is self:
            return
        self.net.soft_update_from(other.net, tau)

    def save_arrays(self) -> dict:
        return {
            "kind": "mlp",
            "params": self.net.get_flat(),
            "sizes": np.asarray(self.net.sizes),
        }


# ---------------------------------------------------------------------------
# Envelope operators
# ---------------------------------------------------------------------------


def envelope_filter(q, state, w: Weight, weight_samples: list[Weight]) -> np.ndarray:
    """Q vector at the (action, candidate weight) pair maximizing
    w . Q(state, a, w'); ties resolve to the lowest action index, then
    the lowest candidate index.  ``weight_samples`` must contain w."""
    if not weight_samples:
        raise EmptyBatch("weight_samples must be non-empty")
    wv = w.as_array()
    vectors = np.stack(
        [q.q_values(state, cand) for cand in weight_samples], axis=1
    )  # (A, K, m)
    scores = vectors @ wv  # (A, K)
    flat = int(np.argmax(scores))  # row-major: action-major tie-breaking
    a, k = divmod(flat, scores.shape[1])
    return vectors[a, k].copy()


def envelope_backup(
    q_target,
    transition: Transition,
    w: Weight,
    cfg: TrainerConfig | DiscountConfig,
    weight_samples: list[Weight],
) -> np.ndarray:
    """reward + gamma * filter(next state); terminal next states bootstrap
    the zero vector."""
    gamma = cfg.gamma
    reward = np.asarray(transition.reward_estimate, dtype=np.float64)
    if transition.terminal:
        return reward.copy()
    return reward + gamma * envelope_filter(
        q_target, transition.next_state, w, weight_samples
    )


def greedy_action(q, state, w: Weight) -> int:
    """argmax_a w . Q(state, a, w); lowest action index wins ties."""
    return int(np.argmax(q.q_values(state, w) @ w.as_array()))


def _tabular_targets(
    q_target: TabularQ,
    batch: Batch,
    gamma: float,
    cand_ids: np.ndarray,
) -> np.ndarray:
    """Vectorized envelope backups for a batch against a tabular target.

    ``cand_ids`` is (B, K): per-element candidate grid ids, the element's
    own weight id first.
    """
    s_next = batch.next_states.astype(np.int64)
    gathered = q_target.table[
        s_next[:, None, None],
        np.arange(q_target.n_actions)[None, :, None],
        cand_ids[:, None, :],
    ]  # (B, A, K, m)
    scores = np.einsum("bakm,bm->bak", gathered, batch.weights)
    B, A, K = scores.shape
    flat = scores.reshape(B, A * K).argmax(axis=1)
    filt = gathered.reshape(B, A * K, -1)[np.arange(B), flat]
    return batch.rewards + gamma * (~batch.terminals)[:, None] * filt


def td_step(
    q,
    q_target,
    minibatch,
    cfg: TrainerConfig,
    weight_samples: list[Weight] | None = None,
    rng: np.random.Generator | None = None,
    optimizer: Adam | None = None,
    step_size: float | None = None,
) -> float:
    """One gradient step toward the envelope backup targets.

    Loss = mean |w . (Q - target)| + 0.5 * mean (Q - target)^2; the
    tabular realization applies the exact per-sample relaxation toward
    its target, the network realization the full combined gradient.
    The target is soft-updated with ``cfg.target_tau`` afterwards.
    """
    batch = (
        minibatch
        if isinstance(minibatch, Batch)
        else Batch.from_transitions(list(minibatch))
    )
    if len(batch) == 0:
        raise EmptyBatch("empty minibatch")
    gamma = cfg.gamma
    if isinstance(q, TabularQ):
        own = batch.weight_ids.copy()
        missing = own < 0
        if missing.any():
            for i in np.nonzero(missing)[0]:
                own[i] = q.grid_index(Weight(tuple(batch.weights[i])))
        if weight_samples:
            extra_ids = np.array(
                [q.grid_index(w) for w in weight_samples], dtype=np.int64
            )
            cand_ids = np.concatenate(
                (own[:, None], np.tile(extra_ids, (len(batch), 1))), axis=1
            )
        else:
            cand_ids = own[:, None]
        targets = _tabular_targets(q_target, batch, gamma, cand_ids)
        s = batch.states.astype(np.int64)
        a = batch.actions
        current = q.table[s, a, own]
        delta = current - targets
        loss = float(
            np.abs(np.einsum("bm,bm->b", batch.weights, delta)).mean()
            + AUX_SQUARED_WEIGHT * (delta**2).mean()
        )
        alpha = cfg.tabular_step if step_size is None else step_size
        np.add.at(q.table, (s, a, own), alpha * -delta)
        q_target.soft_update_from(q, cfg.target_tau)
        return loss
    return _mlp_td_step(q, q_target, batch, cfg, weight_samples or [], optimizer)


def _mlp_td_step(
    q: MLPQ,
    q_target: MLPQ,
    batch: Batch,
    cfg: TrainerConfig,
    weight_samples: list[Weight],
    optimizer: Adam | None,
) -> float:
    B = len(batch)
    w_q = batch.weights
    # Candidate weights: each element's own weight plus shared samples.
    cands = [w_q] + [np.tile(w.as_array(), (B, 1)) for w in weight_samples]
    K = len(cands)
    next_states = np.repeat(batch.next_states, K, axis=0)
    cand_arr = np.stack(cands, axis=1).reshape(B * K, -1)
    q_next = q_target.q_values_batch(next_states, cand_arr)  # (B*K, A, m)
    q_next = q_next.reshape(B, K, q.n_actions, q.m)
    scores = np.einsum("bkam,bm->bka", q_next, w_q)
    flat = scores.reshape(B, -1).argmax(axis=1)
    filt = q_next.reshape(B, K * q.n_actions, q.m)[np.arange(B), flat]
    targets = batch.rewards + cfg.gamma * (~batch.terminals)[:, None] * filt

    inputs = q._inputs(batch.states, w_q)
    out, cache = q.net.forward(inputs)
    out3 = out.reshape(B, q.n_actions, q.m)
    idx = np.arange(B)
    current = out3[idx, batch.actions]
    delta = current - targets
    loss = float(
        np.abs(np.einsum("bm,bm->b", w_q, delta)).mean()
        + AUX_SQUARED_WEIGHT * (delta**2).mean()
    )
    scalar = np.einsum("bm,bm->b", w_q, delta)
    grad_rows = (
        np.sign(scalar)[:, None] * w_q / B
        + 2.0 * AUX_SQUARED_WEIGHT * delta / (B * q.m)
    )
    grad_out = np.zeros_like(out3)
    grad_out[idx, batch.actions] = grad_rows
    grads = q.net.backward(cache, grad_out.reshape(B, -1))
    if optimizer is None:
        optimizer = Adam(q.net.params, lr=cfg.learning_rate)
    optimizer.step(grads)
    q_target.soft_update_from(q, cfg.target_tau)
    return loss


# ---------------------------------------------------------------------------
# Explicit-MDP operator (value iteration and contraction checks)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularMDP:
    """Explicit finite MDP: transition tensor (S, A, S), reward (S, A, m),
    and optional terminal mask (S,)."""

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def m(self) -> int:
        return self.rewards.shape[2]


def envelope_operator(
    mdp: TabularMDP, table: np.ndarray, grid: np.ndarray, gamma: float
) -> np.ndarray:
    """One exact application of the optimality backup to a full table
    (S, A, G, m) over the weight grid (G, m)."""
    S, A, G, m = table.shape
    scores = np.einsum("xagm,hm->xagh", table, grid)  # value under grid[h]
    flat = scores.reshape(S, A * G, -1).argmax(axis=1)  # (S, H)
    filt = table.reshape(S, A * G, m)[
        np.arange(S)[:, None], flat
    ]  # (S, H, m)
    if mdp.terminal is not None:
        filt = filt * (~mdp.terminal)[:, None, None]
    expected = np.einsum("sax,xhm->sahm", mdp.transitions, filt)
    return mdp.rewards[:, :, None, :] + gamma * expected


def value_iteration(
    mdp: TabularMDP, grid: np.ndarray, gamma: float, iters: int = 1_000, tol: float = 1e-10
) -> np.ndarray:
    """Iterate the envelope operator to its fixed point."""
    table = np.zeros((mdp.n_states, mdp.n_actions, len(grid), mdp.m))
    for _ in range(iters):
        new = envelope_operator(mdp, table, grid, gamma)
        if np.abs(new - table).max() < tol:
            return new
        table = new
    return table


def metric_d(q1: np.ndarray, q2: np.ndarray, grid: np.ndarray) -> float:
    """sup over (s, a, w in grid) of |w . (Q1 - Q2)|."""
    diff = np.einsum("sagm,gm->sag", q1 - q2, grid)
    return float(np.abs(diff).max())
