import math

import numpy as np
import pytest

from prefmorl.core import DiscountConfig, Segment, make_weight
from prefmorl.errors import BadBound, MissingGroundTruth
from prefmorl.teacher import (
    DelayedScriptedTeacher,
    ScriptedTeacher,
    TeacherQuery,
    min_segment_length,
    scripted_preference,
    teacher_properties_check,
)

CFG = DiscountConfig(0.99)


def query(gt0, gt1, w=(0.5, 0.5), qid="q"):
    gt0 = np.asarray(gt0, dtype=float)
    gt1 = np.asarray(gt1, dtype=float)
    s0 = Segment(tuple((i, 0) for i in range(len(gt0))))
    s1 = Segment(tuple((i, 1) for i in range(len(gt1))))
    return TeacherQuery(qid, s0, s1, make_weight(w), gt_first=gt0, gt_second=gt1)


class TestScriptedPreference:
    def test_identical_segments_are_indifferent(self):
        gt = [(1.0, 2.0), (0.0, 1.0)]
        assert scripted_preference(query(gt, gt), CFG) == 0.5

    def test_larger_second_return_prefers_second(self):
        q = query([(1.0, 0.0)], [(2.0, 0.0)], w=(1.0, 0.0))
        assert scripted_preference(q, CFG) == 1.0

    def test_equal_time_cost_is_indifferent(self):
        # Two DST-style segments of equal length under the pure time
        # weight: both sums are -sum(gamma^t).
        gt0 = [(0.0, -1.0), (5.0, -1.0)]
        gt1 = [(2.0, -1.0), (0.0, -1.0)]
        q = query(gt0, gt1, w=(0.0, 1.0))
        assert scripted_preference(q, CFG) == 0.5

    def test_missing_ground_truth(self):
        s = Segment(((0, 0),))
        q = TeacherQuery("q", s, s, make_weight([0.5, 0.5]))
        with pytest.raises(MissingGroundTruth):
            scripted_preference(q, CFG)

    def test_episode_tail_pays_nothing_after_its_end(self):
        # A 1-step tail against a 2-step segment inside one window: the
        # tail accrues only its own step.
        q = query([(1.0, 0.0)], [(0.8, 0.0), (0.8, 0.0)], w=(1.0, 0.0))
        # 1.0 < 0.8 + 0.99 * 0.8, so the longer segment wins.
        assert scripted_preference(q, CFG) == 1.0
        q2 = query([(2.0, 0.0)], [(0.8, 0.0), (0.8, 0.0)], w=(1.0, 0.0))
        assert scripted_preference(q2, CFG) == 0.0

    def test_swap_flips_strict_labels(self):
        rng = np.random.default_rng(4)
        for i in range(50):
            q = query(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
            a = scripted_preference(q, CFG)
            b = scripted_preference(q.swapped(), CFG)
            if a == 0.5:
                assert b == 0.5
            else:
                assert a + b == 1.0


class TestTeacherProperties:
    def _random_queries(self, n, seed):
        rng = np.random.default_rng(seed)
        queries = []
        # Triples sharing a weight so transitivity has material to check.
        for i in range(n):
            w = (0.3, 0.7)
            segs = [rng.normal(size=(4, 2)) for _ in range(3)]
            for a in range(3):
                for b in range(a + 1, 3):
                    queries.append(query(segs[a], segs[b], w=w, qid=f"q{i}.{a}{b}"))
        return queries

    def test_scripted_teacher_is_clean(self):
        teacher = ScriptedTeacher(CFG)
        report = teacher_properties_check(teacher, self._random_queries(66, 0), CFG)
        assert report.ok
        assert report.total_violations == 0

    def test_adversarial_stub_flagged(self):
        always_second = lambda q: 1.0
        report = teacher_properties_check(always_second, self._random_queries(5, 1), CFG)
        assert len(report.symmetry_violations) > 0

    def test_empty_query_list(self):
        report = teacher_properties_check(ScriptedTeacher(CFG), [], CFG)
        assert report.ok and report.queries_checked == 0

    def test_constructed_cycle_detected(self):
        # A teacher with a hard-wired strict cycle a > b > c > a.
        segs = [Segment(((i, 0),)) for i in range(3)]
        w = make_weight([0.5, 0.5])
        order = {(0, 1): 0.0, (1, 2): 0.0, (2, 0): 0.0}

        def cyclic(q):
            key = (q.first.steps[0][0], q.second.steps[0][0])
            if key in order:
                return order[key]
            return 1.0 - order[(key[1], key[0])]

        queries = [
            TeacherQuery(f"q{a}{b}", segs[a], segs[b], w)
            for a, b in [(0, 1), (1, 2), (2, 0)]
        ]
        report = teacher_properties_check(cyclic, queries, CFG)
        assert len(report.transitivity_violations) > 0


class TestMinSegmentLength:
    def test_paper_scale_bound(self):
        # ceil(log(0.005) / log(0.99)) = ceil(527.18) = 528, evaluated
        # independently from the closed form.
        expected = math.ceil(math.log(0.005) / math.log(0.99))
        assert expected == 528
        assert min_segment_length(1.0, CFG, 1.0) == 528

    def test_boundary_clamps_to_one(self):
        r_max = 1.0
        delta = 2 * r_max / (1 - CFG.gamma)
        assert min_segment_length(delta, CFG, r_max) == 1

    def test_nonpositive_inputs_rejected(self):
        with pytest.raises(BadBound):
            min_segment_length(0.0, CFG, 1.0)
        with pytest.raises(BadBound):
            min_segment_length(-1.0, CFG, 1.0)
        with pytest.raises(BadBound):
            min_segment_length(1.0, CFG, 0.0)

    def test_truncated_preference_matches_full_horizon_at_bound(self):
        # Constant weighted reward streams c0, c1 with truncated gap >= 1:
        # preferences on H=528 prefixes match the full-horizon order.
        H = min_segment_length(1.0, CFG, 1.0)
        rng = np.random.default_rng(9)
        for _ in range(20):
            c0, c1 = rng.uniform(-1, 1, size=2)
            if abs(c1 - c0) * (1 - CFG.gamma**H) / (1 - CFG.gamma) < 1.0:
                continue
            gt0 = np.repeat([[c0, 0.0]], H, axis=0)
            gt1 = np.repeat([[c1, 0.0]], H, axis=0)
            label = scripted_preference(query(gt0, gt1, w=(1.0, 0.0)), CFG)
            full_order = 1.0 if c1 / (1 - CFG.gamma) > c0 / (1 - CFG.gamma) else 0.0
            assert label == full_order

    def test_short_horizon_counterexample(self):
        # sigma0 pays 1 for five steps then -1 forever; sigma1 pays 0.9
        # forever.  At H=5 the teacher prefers sigma0, over the full
        # horizon sigma1 wins.
        H = 5
        tail = 600
        gt0_trunc = np.repeat([[1.0, 0.0]], H, axis=0)
        gt1_trunc = np.repeat([[0.9, 0.0]], H, axis=0)
        label_trunc = scripted_preference(
            query(gt0_trunc, gt1_trunc, w=(1.0, 0.0)), CFG
        )
        gt0_full = np.concatenate(
            (gt0_trunc, np.repeat([[-1.0, 0.0]], tail, axis=0))
        )
        gt1_full = np.repeat([[0.9, 0.0]], H + tail, axis=0)
        label_full = scripted_preference(query(gt0_full, gt1_full, w=(1.0, 0.0)), CFG)
        assert label_trunc == 0.0  # first preferred on the prefix
        assert label_full == 1.0  # second preferred in the long run


class TestTeacherScheduling:
    def _queries(self, n):
        rng = np.random.default_rng(2)
        return [
            query(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), qid=f"s{i}")
            for i in range(n)
        ]

    def test_scripted_answers_immediately(self):
        t = ScriptedTeacher(CFG)
        qs = self._queries(3)
        t.submit(qs)
        answered = t.harvest()
        assert [q.query_id for q, _ in answered] == [q.query_id for q in qs]
        assert t.harvest() == []

    def test_delayed_teacher_lags_one_cycle(self):
        t = DelayedScriptedTeacher(CFG, delay=1)
        first, second = self._queries(2), self._queries(2)
        t.submit(first)
        assert t.harvest() == []
        t.submit(second)
        answered = t.harvest()
        assert [q.query_id for q, _ in answered] == [q.query_id for q in first]
