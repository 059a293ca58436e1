"""Expected utility and hypervolume evaluation.

Expected utility averages the achieved weighted return over uniformly
sampled weights.  Hypervolume is the exact Lebesgue measure of the union
of axis-aligned boxes spanned between a reference point and each
frontier point: a sorted sweep for two objectives, recursive slicing on
the last objective above that.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import DiscountConfig, Weight, sample_weights
from .envs.base import Env
from .errors import BadDimension, BadReference
from .pareto import brute_force_frontier

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrontierEstimate:
    """An approximate Pareto set of return vectors plus the reference
    point.  Points below the reference are clipped to it (and logged)
    unless ``clip=False``, in which case hypervolume() rejects them."""

    points: np.ndarray
    reference: np.ndarray
    clip: bool = True
    _clipped: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        ref = np.asarray(self.reference, dtype=np.float64)
        if pts.size and pts.shape[1] != ref.shape[0]:
            raise BadDimension(
                f"points have {pts.shape[1]} objectives, reference {ref.shape[0]}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "reference", ref)
        if self.clip and pts.size:
            below = pts < ref
            if below.any():
                log.info(
                    "clipped %d frontier coordinates to the reference point",
                    int(below.sum()),
                )
            pts = np.maximum(pts, ref)
        object.__setattr__(self, "_clipped", pts)

    @property
    def m(self) -> int:
        return self.reference.shape[0]


def expected_utility(evaluate, n_weights: int, seed: int, m: int = 2) -> float:
    """Mean of ``evaluate(w)`` over n_weights uniform simplex samples."""
    if n_weights < 1:
        raise BadDimension("need at least one weight sample")
    weights = sample_weights(n_weights, m, seed)
    return float(np.mean([evaluate(w) for w in weights]))


def hypervolume(f: FrontierEstimate) -> float:
    """Exact union volume of the boxes [reference, point]."""
    pts = f._clipped
    if pts.size == 0:
        return 0.0
    if not (pts >= f.reference).all():
        raise BadReference("frontier points below the reference point")
    if not 2 <= f.m <= 6:
        raise BadDimension(f"hypervolume supports 2..6 objectives, got {f.m}")
    shifted = pts - f.reference
    # Zero-extent points contribute nothing; drop for the recursion.
    shifted = shifted[(shifted > 0).all(axis=1)]
    if shifted.size == 0:
        return 0.0
    return _union_volume(shifted)


def _prune_dominated(pts: np.ndarray) -> np.ndarray:
    """Drop duplicates and points inside another point's box; they never
    change a union volume but blow up the recursion."""
    if len(pts) <= 1:
        return pts
    order = np.lexsort(pts.T[::-1])[::-1]
    pts = pts[order]
    keep: list[int] = []
    for i in range(len(pts)):
        covered = False
        for j in keep:
            if (pts[j] >= pts[i]).all():
                covered = True
                break
        if not covered:
            keep.append(i)
    return pts[keep]


def _union_volume(pts: np.ndarray) -> float:
    """Union of [0, p] boxes for positive points, by exclusive
    contributions: each point adds its box volume minus the part its
    successors already cover (computed on the point-clipped set)."""
    pts = _prune_dominated(pts)
    d = pts.shape[1]
    if d == 1:
        return float(pts.max())
    if d == 2:
        # Sorted sweep; lexsort above ordered by descending first coord.
        total, covered = 0.0, 0.0
        for x, y in pts:
            if y > covered:
                total += x * (y - covered)
                covered = y
        return float(total)
    total = 0.0
    for i in range(len(pts)):
        rest = pts[i + 1 :]
        exclusive = float(np.prod(pts[i]))
        if len(rest):
            clipped = np.minimum(rest, pts[i])
            clipped = clipped[(clipped > 0).all(axis=1)]
            if len(clipped):
                exclusive -= _union_volume(clipped)
        total += exclusive
    return float(total)


def frontier_from_policy(
    act,
    env: Env,
    weight_grid: list[Weight],
    cfg: DiscountConfig,
    episode_seed: int = 0,
) -> FrontierEstimate:
    """Greedy-rollout returns over a weight grid, pruned to the
    non-dominated subset.

    ``act(state, w) -> action`` is the greedy policy.  Rollout seeds
    derive from ``episode_seed`` and the grid position, so stochastic
    tasks evaluate reproducibly.
    """
    returns = []
    for i, w in enumerate(weight_grid):
        returns.append(rollout_return(act, env, w, cfg, seed=episode_seed + i))
    if not returns:
        return FrontierEstimate(
            np.empty((0, env.spec.m)), np.asarray(env.spec.hv_reference)
        )
    arr = np.stack(returns)
    keep = brute_force_frontier(arr)
    return FrontierEstimate(arr[keep], np.asarray(env.spec.hv_reference))


def rollout_return(
    act, env: Env, w: Weight, cfg: DiscountConfig, seed: int = 0
) -> np.ndarray:
    """Discounted return vector of one greedy episode under weight w."""
    state = env.reset(seed)
    total = np.zeros(env.spec.m)
    discount = 1.0
    while True:
        out = env.step(act(state, w))
        total += discount * out.reward_array()
        discount *= cfg.gamma
        state = out.next_state
        if out.terminated or out.truncated:
            return total
