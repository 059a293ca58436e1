import numpy as np
import pytest

from prefmorl.core import DiscountConfig, make_weight, simplex_grid
from prefmorl.envs import make_env
from prefmorl.errors import BadReference
from prefmorl.metrics import (
    FrontierEstimate,
    expected_utility,
    frontier_from_policy,
    hypervolume,
    rollout_return,
)
from prefmorl.pareto import brute_force_frontier

CFG = DiscountConfig(0.99)


def mc_hypervolume(points, ref, n=200_000, seed=0):
    """Monte Carlo rejection oracle: fraction of the bounding box covered
    by at least one [ref, point] box."""
    pts = np.asarray(points, dtype=float)
    ref = np.asarray(ref, dtype=float)
    hi = pts.max(axis=0)
    box = np.prod(hi - ref)
    if box == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    samples = rng.uniform(ref, hi, size=(n, len(ref)))
    inside = (samples[:, None, :] <= pts[None, :, :]).all(axis=2).any(axis=1)
    return box * inside.mean()


class TestHypervolume:
    def test_two_point_worked_example(self):
        f = FrontierEstimate(np.array([[2.0, 1.0], [1.0, 2.0]]), np.zeros(2))
        assert hypervolume(f) == pytest.approx(3.0, abs=1e-12)

    def test_single_box(self):
        f = FrontierEstimate(np.array([[3.0, 4.0]]), np.zeros(2))
        assert hypervolume(f) == 12.0

    def test_dominated_point_contributes_nothing(self):
        base = hypervolume(FrontierEstimate(np.array([[2.0, 1.0], [1.0, 2.0]]), np.zeros(2)))
        more = hypervolume(
            FrontierEstimate(np.array([[2.0, 1.0], [1.0, 2.0], [0.5, 0.5]]), np.zeros(2))
        )
        assert more == base == 3.0

    def test_duplicates_do_not_change_result(self):
        f = FrontierEstimate(np.array([[2.0, 1.0], [2.0, 1.0], [1.0, 2.0]]), np.zeros(2))
        assert hypervolume(f) == 3.0

    def test_monotone_under_added_points(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0.2, 1.0, size=(8, 3))
        base = hypervolume(FrontierEstimate(pts, np.zeros(3)))
        extra = np.vstack((pts, rng.uniform(0.2, 1.0, size=(1, 3))))
        assert hypervolume(FrontierEstimate(extra, np.zeros(3))) >= base - 1e-12

    def test_matches_monte_carlo_in_3d(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            pts = rng.uniform(0.3, 1.0, size=(12, 3))
            exact = hypervolume(FrontierEstimate(pts, np.zeros(3)))
            approx = mc_hypervolume(pts, np.zeros(3), seed=trial)
            assert exact == pytest.approx(approx, rel=0.02)

    def test_matches_monte_carlo_in_5d(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0.4, 1.0, size=(10, 5))
        exact = hypervolume(FrontierEstimate(pts, np.zeros(5)))
        approx = mc_hypervolume(pts, np.zeros(5), n=400_000, seed=9)
        assert exact == pytest.approx(approx, rel=0.03)

    def test_nonzero_reference_translation(self):
        ref = np.array([-1.0, -2.0])
        f = FrontierEstimate(np.array([[1.0, -1.0]]), ref)
        assert hypervolume(f) == pytest.approx(2.0 * 1.0)

    def test_points_below_reference_clip_by_default(self):
        f = FrontierEstimate(np.array([[2.0, -5.0], [1.0, 2.0]]), np.zeros(2))
        # (2, -5) clips to (2, 0): a zero-height box.
        assert hypervolume(f) == pytest.approx(2.0)

    def test_unclipped_below_reference_rejected(self):
        f = FrontierEstimate(np.array([[2.0, -5.0]]), np.zeros(2), clip=False)
        with pytest.raises(BadReference):
            hypervolume(f)

    def test_empty_frontier(self):
        f = FrontierEstimate(np.empty((0, 2)), np.zeros(2))
        assert hypervolume(f) == 0.0


class TestExpectedUtility:
    def test_constant_evaluator(self):
        assert expected_utility(lambda w: 4.2, 500, seed=0) == pytest.approx(4.2)

    def test_linear_evaluator_matches_simplex_mean(self):
        # E[w] = (0.5, 0.5) on the 1-simplex, so E[w . (2, 4)] = 3.
        got = expected_utility(
            lambda w: float(np.dot(w.values, [2.0, 4.0])), 100_000, seed=1
        )
        assert got == pytest.approx(3.0, abs=0.02)

    def test_seed_determinism(self):
        f = lambda w: float(w.values[0] ** 2)
        assert expected_utility(f, 64, seed=3) == expected_utility(f, 64, seed=3)

    def test_optimal_policy_dominates_in_expectation(self):
        # Per-sample maximality: max over a fixed menu beats any single one.
        menu = np.array([[2.0, 0.0], [0.0, 2.0], [1.2, 1.2]])
        best = expected_utility(
            lambda w: float(max(menu @ np.asarray(w.values))), 2000, seed=7
        )
        for row in menu:
            fixed = expected_utility(
                lambda w: float(row @ np.asarray(w.values)), 2000, seed=7
            )
            assert best >= fixed - 1e-12


class TestFrontierFromPolicy:
    def test_ft_frontier_points_are_leaf_returns(self):
        env = make_env("ft")
        # Optimal leaf choice per weight, realized as a greedy policy over
        # precomputed best-leaf paths.
        leaf_returns = env.leaf_values * CFG.gamma**5

        def act(state, w):
            wv = np.asarray(w.values)
            best_leaf = int(np.argmax(leaf_returns @ wv))
            node = best_leaf + env.n_internal
            path = []
            while node != state:
                parent = (node - 1) // 2
                path.append(node - (2 * parent + 1))
                node = parent
                if node < 0:
                    raise AssertionError("state not on path to best leaf")
            return path[-1]

        f = frontier_from_policy(act, env, simplex_grid(6, 2), CFG)
        for p in f.points:
            assert any(np.allclose(p, lv) for lv in leaf_returns)

    def test_outputs_are_mutually_nondominated(self):
        env = make_env("dst")
        rng = np.random.default_rng(0)

        def random_act(state, w):
            return int(rng.integers(0, 4))

        f = frontier_from_policy(random_act, env, simplex_grid(2, 10), CFG)
        assert brute_force_frontier(f.points) == list(range(len(f.points)))

    def test_empty_grid_gives_zero_hv(self):
        env = make_env("dst")
        f = frontier_from_policy(lambda s, w: 0, env, [], CFG)
        assert hypervolume(f) == 0.0

    def test_rollout_return_discounts_from_start(self):
        env = make_env("ft")
        ret = rollout_return(lambda s, w: 0, env, make_weight([1.0] + [0.0] * 5), CFG, seed=0)
        leftmost = env.leaf_values[0] * CFG.gamma**5
        assert np.allclose(ret, leftmost)
