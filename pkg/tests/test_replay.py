import numpy as np
import pytest

from prefmorl.core import PreferenceRecord, Segment, make_weight
from prefmorl.errors import EmptyBuffer, InsufficientData, LengthMismatch
from prefmorl.replay import Batch, PreferenceBuffer, ReplayBuffer, Transition

W = make_weight([0.5, 0.5])


def t(state, action=0, episode=0, step=0, reward=(0.0, 0.0), terminal=False):
    return Transition(
        state=state,
        action=action,
        next_state=state + 1,
        reward_estimate=np.asarray(reward, dtype=float),
        weight=W,
        episode_id=episode,
        step_index=step,
        terminal=terminal,
        true_reward=np.asarray(reward, dtype=float) + 1.0,
    )


def fill_episodes(buf, n_episodes, ep_len, start_episode=0):
    for e in range(start_episode, start_episode + n_episodes):
        for s in range(ep_len):
            buf.push(t(state=e * 100 + s, episode=e, step=s))


class TestPushAndSample:
    def test_single_element_roundtrip(self):
        buf = ReplayBuffer(capacity=10, m=2)
        buf.push(t(state=42, reward=(1.0, -1.0)))
        got = buf.sample_minibatch(1, seed=0)[0]
        assert got.state == 42
        assert np.allclose(got.reward_estimate, [1.0, -1.0])

    def test_fifo_eviction(self):
        buf = ReplayBuffer(capacity=2, m=2)
        for i in range(3):
            buf.push(t(state=i))
        states = {tr.state for tr in buf.transitions()}
        assert states == {1, 2}

    def test_insertion_order_strictly_increases(self):
        buf = ReplayBuffer(capacity=3, m=2)
        for i in range(5):
            buf.push(t(state=i))
        orders = [tr.order for tr in buf.transitions()]
        assert orders == sorted(orders) and len(set(orders)) == len(orders)
        assert orders[-1] == 4

    def test_sampling_with_replacement(self):
        buf = ReplayBuffer(capacity=100, m=2)
        for i in range(10):
            buf.push(t(state=i))
        batch = buf.sample_minibatch(256, seed=1)
        assert len(batch) == 256
        assert {tr.state for tr in batch} <= set(range(10))

    def test_seed_determinism(self):
        buf = ReplayBuffer(capacity=100, m=2)
        for i in range(10):
            buf.push(t(state=i))
        a = [tr.state for tr in buf.sample_minibatch(32, seed=9)]
        b = [tr.state for tr in buf.sample_minibatch(32, seed=9)]
        assert a == b

    def test_empty_buffer(self):
        buf = ReplayBuffer(capacity=4, m=2)
        with pytest.raises(EmptyBuffer):
            buf.sample_minibatch(1, seed=0)


class TestQueryPairs:
    def test_degenerate_window_is_uniform_sampling(self):
        buf = ReplayBuffer(capacity=1000, m=2)
        fill_episodes(buf, n_episodes=5, ep_len=20)
        pairs = buf.sample_query_pairs(50, H=5, recency_window=1.0, seed=0)
        assert len(pairs) == 50
        for a, b in pairs:
            assert len(a) == len(b) == 5
            assert (a.episode_id, a.start) != (b.episode_id, b.start)

    def test_short_episode_insufficient(self):
        buf = ReplayBuffer(capacity=100, m=2)
        fill_episodes(buf, n_episodes=1, ep_len=5)
        with pytest.raises(InsufficientData):
            buf.sample_query_pairs(1, H=10, recency_window=1.0, seed=0)

    def test_recency_window_threshold(self):
        buf = ReplayBuffer(capacity=2000, m=2)
        fill_episodes(buf, n_episodes=50, ep_len=20)  # 1000 transitions
        pairs = buf.sample_query_pairs(200, H=5, recency_window=0.1, seed=3)
        orders = [tr.order for tr in buf.transitions()]
        threshold = orders[900]
        for a, b in pairs:
            for seg in (a, b):
                start_order = seg.episode_id * 20 + seg.start
                assert start_order >= threshold

    def test_segments_never_span_episodes(self):
        buf = ReplayBuffer(capacity=1000, m=2)
        fill_episodes(buf, n_episodes=10, ep_len=7)
        pairs = buf.sample_query_pairs(100, H=6, recency_window=1.0, seed=1)
        for a, b in pairs:
            for seg in (a, b):
                states = seg.states
                episode = states[0] // 100
                assert all(s // 100 == episode for s in states)
                steps = [s % 100 for s in states]
                assert steps == list(range(seg.start, seg.start + 6))

    def test_ground_truth_roundtrip(self):
        buf = ReplayBuffer(capacity=1000, m=2)
        fill_episodes(buf, n_episodes=4, ep_len=10)
        (a, b), = buf.sample_query_pairs(1, H=4, recency_window=1.0, seed=7)
        gt = buf.ground_truth(a)
        assert gt.shape == (4, 2)
        assert np.allclose(gt, 1.0)  # pushed true rewards are reward + 1


class TestRelabel:
    class ZeroModel:
        def predict_reward_batch(self, states, actions):
            return np.zeros((len(states), 2))

    class ConstModel:
        def predict_reward_batch(self, states, actions):
            return np.tile([1.0, 2.0], (len(states), 1))

    def test_relabel_with_zero_model(self):
        buf = ReplayBuffer(capacity=10, m=2)
        for i in range(3):
            buf.push(t(state=i, reward=(5.0, 5.0)))
        buf.relabel_all(self.ZeroModel())
        assert all(np.allclose(tr.reward_estimate, 0) for tr in buf.transitions())

    def test_relabel_is_idempotent(self):
        buf = ReplayBuffer(capacity=10, m=2)
        for i in range(3):
            buf.push(t(state=i))
        buf.relabel_all(self.ConstModel())
        first = [tr.reward_estimate.copy() for tr in buf.transitions()]
        buf.relabel_all(self.ConstModel())
        second = [tr.reward_estimate for tr in buf.transitions()]
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_relabel_touches_only_rewards(self):
        buf = ReplayBuffer(capacity=10, m=2)
        fill_episodes(buf, n_episodes=2, ep_len=3)
        before = buf.transitions()
        buf.relabel_all(self.ConstModel())
        after = buf.transitions()
        assert len(before) == len(after)
        for x, y in zip(before, after):
            assert (x.state, x.action, x.episode_id, x.step_index, x.order) == (
                y.state,
                y.action,
                y.episode_id,
                y.step_index,
                y.order,
            )
            assert x.weight == y.weight
            assert np.allclose(y.reward_estimate, [1.0, 2.0])
            assert np.array_equal(x.true_reward, y.true_reward)


class TestPreferenceBuffer:
    def record(self, label=1.0, H=3):
        s0 = Segment(tuple((i, 0) for i in range(H)))
        s1 = Segment(tuple((i, 1) for i in range(H)))
        return PreferenceRecord(s0, s1, W, label)

    def test_append_and_pack(self):
        buf = PreferenceBuffer()
        for label in (0.0, 0.5, 1.0):
            buf.append(self.record(label))
        packed = buf.packed()
        assert packed["s0"].shape == (3, 3)
        assert list(packed["label"]) == [0.0, 0.5, 1.0]

    def test_mixed_lengths_rejected(self):
        buf = PreferenceBuffer()
        buf.append(self.record(H=3))
        with pytest.raises(LengthMismatch):
            buf.append(self.record(H=4))

    def test_validation_split_is_every_tenth(self):
        buf = PreferenceBuffer()
        for _ in range(25):
            buf.append(self.record())
        train, val = buf.split_indices()
        assert list(val) == [9, 19]
        assert len(train) == 23

    def test_empty_pack_rejected(self):
        with pytest.raises(EmptyBuffer):
            PreferenceBuffer().packed()


class TestBatch:
    def test_from_transitions_matches_columns(self):
        trs = [t(state=i, action=i % 2) for i in range(4)]
        batch = Batch.from_transitions(trs)
        assert list(batch.states) == [0, 1, 2, 3]
        assert list(batch.actions) == [0, 1, 0, 1]
        assert batch.rewards.shape == (4, 2)
