import json

import numpy as np
import pytest

from prefmorl.core import DiscountConfig, make_weight, simplex_grid
from prefmorl.envs import make_env
from prefmorl.errors import DimensionMismatch, InsufficientHorizon, TooLarge
from prefmorl.pareto import (
    FinitePolicySet,
    RolloutPolicy,
    brute_force_frontier,
    convex_frontier,
    dominates,
    enumerate_policies,
    identity_weights,
    nonconvex_frontier,
)
from prefmorl.teacher import ScriptedTeacher

CFG = DiscountConfig(0.99)
TEACHER = ScriptedTeacher(CFG)


class TestDominates:
    def test_strict(self):
        assert dominates((2, 2), (1, 1))

    def test_incomparable(self):
        assert not dominates((2, 0), (0, 2))

    def test_equal_is_not_dominance(self):
        assert not dominates((1, 1), (1, 1))

    def test_weak_with_one_strict(self):
        assert dominates((1, 2), (1, 1))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            dominates((1, 2, 3), (1, 2))


class TestBruteForce:
    def test_three_incomparable_points(self):
        # (0.5, 0.4) is dominated by neither vertex point.
        assert brute_force_frontier([(1, 0), (0, 1), (0.5, 0.4)]) == [0, 1, 2]

    def test_duplicates_all_retained(self):
        assert brute_force_frontier([(1, 1), (1, 1)]) == [0, 1]

    def test_singleton(self):
        assert brute_force_frontier([(3, 4)]) == [0]

    def test_dominated_point_dropped(self):
        assert brute_force_frontier([(2, 2), (1, 1)]) == [0]


class TestConvexFrontier:
    def test_singleton_set(self):
        ps = FinitePolicySet.from_returns([(1.0, 2.0)])
        assert convex_frontier(ps, simplex_grid(2, 4), TEACHER, H=1, cfg=CFG) == [0]

    def test_two_vertices_both_retained(self):
        ps = FinitePolicySet.from_returns([(1.0, 0.0), (0.0, 1.0)])
        grid = [make_weight(w) for w in ([1, 0], [0, 1], [0.5, 0.5])]
        assert convex_frontier(ps, grid, TEACHER, H=1, cfg=CFG) == [0, 1]

    def test_interior_nonsupported_point_not_found(self):
        # (1.4, 1.4) is Pareto optimal but below the chord between the
        # vertices: w . (1.4, 1.4) = 1.4 < max(3 w1, 3 w2) for every w,
        # so no linear weight selects it.
        ps = FinitePolicySet.from_returns([(3.0, 0.0), (0.0, 3.0), (1.4, 1.4)])
        got = convex_frontier(ps, simplex_grid(2, 100), TEACHER, H=1, cfg=CFG)
        assert got == [0, 1]
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [0, 1, 2]

    @staticmethod
    def supported_indices(returns):
        """Independent oracle: i is supported iff some weight makes it a
        maximizer of w . r (checked on the upper convex hull in 2-D by
        scanning all pairwise slopes)."""
        returns = np.asarray(returns)
        n = len(returns)
        supported = []
        for i in range(n):
            # Candidate weights: vertices plus normals of every pair.
            cands = [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]
            for j in range(n):
                d = returns[j] - returns[i]
                if d[0] * d[1] < 0:
                    w1 = -d[1] / (d[0] - d[1])
                    cands.append((w1, 1 - w1))
            for w in cands:
                vals = returns @ np.asarray(w)
                if vals[i] >= vals.max() - 1e-12:
                    supported.append(i)
                    break
        return supported

    def test_matches_supported_oracle_on_dst_policies(self):
        env = make_env("dst")
        ps = enumerate_policies(env)
        returns = ps.returns(CFG)
        oracle = brute_force_frontier(returns)
        supported = [i for i in self.supported_indices(returns) if i in oracle]
        grid = simplex_grid(2, 2000)  # fine enough to land in every support region
        got = convex_frontier(ps, grid, TEACHER, H=ps.full_length, cfg=CFG)
        assert set(got) <= set(oracle)
        assert set(got) == set(supported)

    def test_horizon_guard(self):
        ps = FinitePolicySet(
            [RolloutPolicy("a", np.ones((5, 2))), RolloutPolicy("b", np.zeros((5, 2)))]
        )
        with pytest.raises(InsufficientHorizon):
            convex_frontier(ps, simplex_grid(2, 2), TEACHER, H=2, cfg=CFG)

    def test_horizon_certificate_accepted(self):
        ps = FinitePolicySet(
            [
                RolloutPolicy("a", np.tile([[1.0, 0.0]], (5, 1))),
                RolloutPolicy("b", np.tile([[0.0, 1.0]], (5, 1))),
            ]
        )
        H = 700  # beyond the certified bound for gap 1 at gamma .99, r_max 1
        got = convex_frontier(
            ps, simplex_grid(2, 4), TEACHER, H=H, cfg=CFG, min_gap=1.0
        )
        assert got == [0, 1]


class TestNonconvexFrontier:
    def test_mutually_incomparable(self):
        ps = FinitePolicySet.from_returns([(2, 0), (0, 2), (1.5, 1.5)])
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [0, 1, 2]

    def test_strict_dominance_removes(self):
        ps = FinitePolicySet.from_returns([(2, 2), (1, 1)])
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [0]

    def test_nonconvex_point_retained(self):
        ps = FinitePolicySet.from_returns([(3, 0), (0, 3), (1.9, 1.9)])
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [0, 1, 2]

    def test_candidate_removes_incumbent(self):
        ps = FinitePolicySet.from_returns([(1, 1), (2, 2)])
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [1]

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            n = int(rng.integers(3, 15))
            m = int(rng.integers(2, 4))
            returns = rng.uniform(-1, 1, size=(n, m))
            ps = FinitePolicySet.from_returns(returns)
            got = nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG)
            assert got == brute_force_frontier(returns)


class TestEnumeratePolicies:
    def test_ft_has_64_leaf_policies(self):
        env = make_env("ft")
        ps = enumerate_policies(env)
        assert len(ps) == 64
        returns = ps.returns(CFG)
        leaf_vectors = env.leaf_values * CFG.gamma**5
        # Returns are exactly the discounted leaf vectors.
        for r in returns:
            assert any(np.allclose(r, lv) for lv in leaf_vectors)

    def test_dst_one_policy_per_treasure(self):
        env = make_env("dst")
        ps = enumerate_policies(env)
        assert len(ps) >= 10

    def test_dst_returns_match_closed_form(self):
        env = make_env("dst")
        ps = enumerate_policies(env)
        for p in ps.policies:
            T = p.length
            r = p.discounted_return(CFG)
            assert r[1] == pytest.approx(-(1 - CFG.gamma**T) / (1 - CFG.gamma))

    def test_rg_is_too_large(self):
        with pytest.raises(TooLarge):
            enumerate_policies(make_env("rg"))


class TestInstanceFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "points.json"
        path.write_text(json.dumps({"returns": [[1, 0], [0, 1]]}))
        ps = FinitePolicySet.from_instance_file(path)
        assert len(ps) == 2
        assert nonconvex_frontier(ps, TEACHER, H=1, cfg=CFG) == [0, 1]


class TestIdentityWeights:
    def test_unit_vectors(self):
        ws = identity_weights(3)
        assert [w.values for w in ws] == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
