import numpy as np
import pytest

from prefmorl.core import Weight, make_weight, simplex_grid
from prefmorl.envs import make_env
from prefmorl.eql import (
    MLPQ,
    TabularMDP,
    TabularQ,
    TrainerConfig,
    envelope_backup,
    envelope_filter,
    envelope_operator,
    greedy_action,
    metric_d,
    td_step,
    value_iteration,
)
from prefmorl.replay import Batch, Transition

W55 = make_weight([0.5, 0.5])
W10 = make_weight([1.0, 0.0])
W01 = make_weight([0.0, 1.0])


def tabular(n_states=3, n_actions=2, grid=(W10, W55, W01)):
    return TabularQ(n_states, n_actions, list(grid))


def transition(state=0, action=0, next_state=1, reward=(0.0, 0.0), terminal=False, w=W55):
    return Transition(
        state=state,
        action=action,
        next_state=next_state,
        reward_estimate=np.asarray(reward, dtype=float),
        weight=w,
        episode_id=0,
        step_index=0,
        terminal=terminal,
        true_reward=np.asarray(reward, dtype=float),
    )


class TestEnvelopeFilter:
    def test_single_sample_is_greedy_max(self):
        q = tabular()
        q.table[1, 0, 1] = [3.0, 3.0]
        q.table[1, 1, 1] = [5.0, 5.0]
        out = envelope_filter(q, 1, W55, [W55])
        assert np.allclose(out, [5.0, 5.0])

    def test_filter_scans_candidate_weights(self):
        q = tabular(n_actions=1, grid=(W10, W01))
        q.table[0, 0, 0] = [1.0, 0.0]  # stored under w1=(1,0)
        q.table[0, 0, 1] = [0.0, 1.0]  # stored under w2=(0,1)
        out = envelope_filter(q, 0, W10, [W10, W01])
        assert np.allclose(out, [1.0, 0.0])

    def test_tie_takes_lowest_action_then_sample(self):
        q = tabular(n_actions=2, grid=(W10, W01))
        q.table[0, 0, 0] = [2.0, 7.0]
        q.table[0, 0, 1] = [2.0, 9.0]  # same score under (1, 0)
        q.table[0, 1, 0] = [2.0, 8.0]
        out = envelope_filter(q, 0, W10, [W10, W01])
        assert np.allclose(out, [2.0, 7.0])


class TestEnvelopeBackup:
    def test_terminal_bootstraps_zero(self):
        q = tabular()
        q.table[:] = 99.0
        t = transition(reward=(1.0, -1.0), terminal=True)
        cfg = TrainerConfig(total_timesteps=10)
        assert np.allclose(envelope_backup(q, t, W55, cfg, [W55]), [1.0, -1.0])

    def test_gamma_zero_ignores_future(self):
        q = tabular()
        q.table[:] = 42.0
        t = transition(reward=(2.0, 3.0))
        cfg = TrainerConfig(total_timesteps=10, gamma=1e-12)
        assert np.allclose(envelope_backup(q, t, W55, cfg, [W55]), [2.0, 3.0])

    def test_half_gamma_hand_arithmetic(self):
        q = tabular()
        q.table[1, :, :] = [2.0, 4.0]
        t = transition(reward=(0.0, 0.0), next_state=1)
        cfg = TrainerConfig(total_timesteps=10, gamma=0.5)
        assert np.allclose(envelope_backup(q, t, W55, cfg, [W55]), [1.0, 2.0])


class TestGreedyAction:
    def test_tie_takes_action_zero(self):
        q = tabular()
        q.table[0, :, :] = [1.0, 1.0]
        assert greedy_action(q, 0, W55) == 0

    def test_weight_conditioned_choice(self):
        q = tabular()
        q.table[0, 0, :] = [5.0, 0.0]
        q.table[0, 1, :] = [4.0, 9.0]
        assert greedy_action(q, 0, W10) == 0
        assert greedy_action(q, 0, W01) == 1

    def test_invariant_under_positive_rescaling(self):
        q = tabular()
        rng = np.random.default_rng(0)
        q.table[...] = rng.normal(size=q.table.shape)
        before = [greedy_action(q, s, W55) for s in range(3)]
        q.table *= 7.3
        after = [greedy_action(q, s, W55) for s in range(3)]
        assert before == after


class TestTdStep:
    def chain_batch(self, w=W55):
        # Two-state chain: 0 -(r=(1,0))-> 1, 1 -(r=(0,1))-> 1, gamma=0.5.
        # Fixed point: Q(1) = (0, 2), Q(0) = (1, 1).
        return Batch.from_transitions(
            [
                transition(state=0, next_state=1, reward=(1.0, 0.0), w=w),
                transition(state=1, next_state=1, reward=(0.0, 1.0), w=w),
            ]
        )

    def test_fixed_point_has_zero_loss_and_no_update(self):
        q = TabularQ(2, 1, [W55])
        q.table[0, 0, 0] = [1.0, 1.0]
        q.table[1, 0, 0] = [0.0, 2.0]
        target = q.copy()
        cfg = TrainerConfig(total_timesteps=10, gamma=0.5, target_tau=1.0)
        before = q.table.copy()
        loss = td_step(q, target, self.chain_batch(), cfg, [W55])
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(q.table, before)

    def test_converges_to_analytic_values(self):
        q = TabularQ(2, 1, [W55])
        cfg = TrainerConfig(
            total_timesteps=10, gamma=0.5, target_tau=1.0, tabular_step=0.5
        )
        batch = self.chain_batch()
        for _ in range(200):
            td_step(q, q, cfg=cfg, minibatch=batch, weight_samples=[W55])
        assert np.allclose(q.table[0, 0, 0], [1.0, 1.0], atol=1e-6)
        assert np.allclose(q.table[1, 0, 0], [0.0, 2.0], atol=1e-6)

    def test_tau_one_syncs_target(self):
        q = TabularQ(2, 1, [W55])
        target = q.copy()
        q.table[0, 0, 0] = [3.0, 3.0]
        cfg = TrainerConfig(total_timesteps=10, gamma=0.5, target_tau=1.0)
        td_step(q, target, self.chain_batch(), cfg, [W55])
        assert np.allclose(target.table, q.table)

    def test_mlp_step_reduces_loss_on_fixed_batch(self):
        env = make_env("energy")
        q = MLPQ(env, m=2, hidden=(16, 16), seed=0)
        target = q.copy()
        cfg = TrainerConfig(
            total_timesteps=10,
            gamma=0.5,
            target_tau=0.05,
            realization="mlp",
            learning_rate=3e-3,
        )
        rng = np.random.default_rng(1)
        trs = [
            transition(
                state=tuple(rng.uniform(0, 1, size=4)),
                next_state=tuple(rng.uniform(0, 1, size=4)),
                reward=(float(rng.normal()), float(rng.normal())),
                action=int(rng.integers(0, env.spec.n_actions)),
            )
            for _ in range(32)
        ]
        batch = Batch.from_transitions(trs)
        from prefmorl.nnet import Adam

        opt = Adam(q.net.params, lr=cfg.learning_rate)
        first = td_step(q, target, batch, cfg, [W55], optimizer=opt)
        for _ in range(150):
            last = td_step(q, target, batch, cfg, [W55], optimizer=opt)
        assert last < first


def random_mdp(rng, n_states, n_actions, m=2):
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.uniform(-1, 1, size=(n_states, n_actions, m))
    return TabularMDP(transitions=P, rewards=R)


class TestOperatorProperties:
    def test_contraction_under_metric_d(self):
        rng = np.random.default_rng(42)
        grid = np.stack([w.as_array() for w in simplex_grid(2, 10)])
        for _ in range(30):
            mdp = random_mdp(rng, int(rng.integers(2, 11)), int(rng.integers(1, 5)))
            shape = (mdp.n_states, mdp.n_actions, len(grid), 2)
            q1 = rng.normal(size=shape)
            q2 = rng.normal(size=shape)
            b1 = envelope_operator(mdp, q1, grid, gamma=0.99)
            b2 = envelope_operator(mdp, q2, grid, gamma=0.99)
            assert metric_d(b1, b2, grid) <= 0.99 * metric_d(q1, q2, grid) + 1e-9

    def test_filter_dominates_every_action(self):
        # w . (HQ)(s, w) >= w . Q(s, a, w) for every action a.
        rng = np.random.default_rng(7)
        grid = simplex_grid(2, 4)
        q = TabularQ(4, 3, grid)
        q.table[...] = rng.normal(size=q.table.shape)
        for s in range(4):
            for w in grid:
                filt = envelope_filter(q, s, w, grid)
                best = float(filt @ w.as_array())
                for a in range(3):
                    assert best >= float(q.vector(s, a, w) @ w.as_array()) - 1e-12

    def test_value_iteration_reaches_fixed_point(self):
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 5, 2)
        grid = np.stack([w.as_array() for w in simplex_grid(2, 4)])
        table = value_iteration(mdp, grid, gamma=0.9)
        again = envelope_operator(mdp, table, grid, gamma=0.9)
        assert np.abs(again - table).max() < 1e-8


def build_dst_mdp(env):
    """Explicit MDP of the treasure grid for exact value iteration."""
    S = env.spec.n_states
    A = 4
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, 2))
    terminal = np.zeros(S, dtype=bool)
    for row in range(env.rows):
        for col in range(env.cols):
            s = row * env.cols + col
            if not env.is_water(row, col):
                P[s, :, s] = 1.0  # unreachable filler
                continue
            if (row, col) in env.treasures:
                terminal[s] = True
                P[s, :, s] = 1.0
                continue
            for a in range(A):
                out = env.transition(s, a)
                P[s, a, env.state_id(out.next_state)] = 1.0
                R[s, a] = out.reward
    return TabularMDP(transitions=P, rewards=R, terminal=terminal)


class TestWeightGridConsistency:
    def test_refining_grid_keeps_coarse_greedy_actions(self):
        env = make_env("dst")
        mdp = build_dst_mdp(env)
        coarse = simplex_grid(2, 10)  # 11 points
        fine = simplex_grid(2, 100)  # 101 points, contains the coarse ones
        gamma = 0.99
        q_coarse = value_iteration(
            mdp, np.stack([w.as_array() for w in coarse]), gamma, iters=3000, tol=1e-12
        )
        q_fine = value_iteration(
            mdp, np.stack([w.as_array() for w in fine]), gamma, iters=3000, tol=1e-12
        )
        fine_index = {w.values: i for i, w in enumerate(fine)}
        water = [
            r * env.cols + c
            for r in range(env.rows)
            for c in range(env.cols)
            if env.is_water(r, c) and (r, c) not in env.treasures
        ]
        for gi, w in enumerate(coarse):
            fi = fine_index[w.values]
            wv = w.as_array()
            for s in water:
                a_coarse = int(np.argmax(q_coarse[s, :, gi] @ wv))
                a_fine = int(np.argmax(q_fine[s, :, fi] @ wv))
                assert a_coarse == a_fine


class TestTrainerConfig:
    def test_defaults_match_reference_settings(self):
        cfg = TrainerConfig()
        assert cfg.feedback_interval == 500
        assert cfg.queries_per_round == 300
        assert cfg.weights_per_round == 10
        assert cfg.gamma == 0.99
        assert cfg.batch_size == 256
        assert cfg.learning_rate == 3e-4
        assert cfg.target_tau == 1e-4
        assert cfg.total_timesteps == 1_000_000

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainerConfig(target_tau=0.0)
        with pytest.raises(ValueError):
            TrainerConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainerConfig(realization="quantum")

    def test_epsilon_schedule(self):
        cfg = TrainerConfig(total_timesteps=1000)
        assert cfg.epsilon_at(0) == 1.0
        assert cfg.epsilon_at(500) == pytest.approx(0.05)
        assert cfg.epsilon_at(1000) == pytest.approx(0.05)
