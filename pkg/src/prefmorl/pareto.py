"""Frontier construction from preferences, and brute-force oracles.

Two preference-driven constructions over a finite policy set:

* ``convex_frontier`` traverses a weight grid and keeps, per weight,
  every policy no other policy strictly beats under that weight —
  recovering the convex (linear-support) part of the Pareto frontier.
* ``nonconvex_frontier`` runs the insertion pass under the identity
  weight set: a candidate that strictly wins on every objective removes
  the incumbent, one that strictly loses on every objective is skipped,
  anything else joins the running set.  Pairwise dominance through unit
  weights recovers arbitrary (also non-convex) frontiers.

Both consult only a teacher over length-H rollout segments.  The teacher
is assumed symmetric, consistent, and transitive (the scripted teacher
is by construction), which lets the per-weight scan use a champion
tournament instead of all-pairs comparison.

``brute_force_frontier`` and ``dominates`` are the numeric oracles the
constructions are validated against.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    SECOND_PREFERRED,
    DiscountConfig,
    Segment,
    Weight,
    discount_weights,
    make_weight,
)
from .envs.base import Env
from .errors import DimensionMismatch, InsufficientHorizon, TooLarge
from .teacher import TeacherQuery, min_segment_length

_query_ids = itertools.count()


@dataclass(frozen=True)
class RolloutPolicy:
    """A policy represented by its deterministic rollout: per-step
    ground-truth reward vectors, shape (T, m)."""

    name: str
    rewards: np.ndarray

    @property
    def length(self) -> int:
        return self.rewards.shape[0]

    def discounted_return(self, cfg: DiscountConfig) -> np.ndarray:
        return discount_weights(cfg.gamma, self.length) @ self.rewards


class FinitePolicySet:
    """Finite set of deterministic policies sharing one environment."""

    def __init__(self, policies: list[RolloutPolicy]):
        if not policies:
            raise TooLarge("policy set is empty")
        m = policies[0].rewards.shape[1]
        for p in policies:
            if p.rewards.shape[1] != m:
                raise DimensionMismatch("policies disagree on objective count")
        self.policies = list(policies)
        self.m = m
        self.full_length = max(p.length for p in policies)

    def __len__(self) -> int:
        return len(self.policies)

    @classmethod
    def from_returns(cls, returns) -> "FinitePolicySet":
        """One policy per return vector, realized as a single-step
        rollout paying the whole vector at t=0."""
        return cls(
            [
                RolloutPolicy(f"p{i}", np.asarray([r], dtype=np.float64))
                for i, r in enumerate(returns)
            ]
        )

    @classmethod
    def from_instance_file(cls, path) -> "FinitePolicySet":
        data = json.loads(Path(path).read_text())
        return cls.from_returns(data["returns"])

    def returns(self, cfg: DiscountConfig) -> np.ndarray:
        return np.stack([p.discounted_return(cfg) for p in self.policies])

    def segment(self, index: int, H: int) -> tuple[Segment, np.ndarray]:
        """Length-H prefix of policy ``index``'s rollout, zero-padded
        past the rollout's end (the episode is over, nothing accrues)."""
        p = self.policies[index]
        gt = np.zeros((H, self.m))
        take = min(H, p.length)
        gt[:take] = p.rewards[:take]
        steps = tuple(((index, t), 0) for t in range(H))
        return Segment(steps), gt

    def r_max(self) -> float:
        return float(max(np.abs(p.rewards).max() for p in self.policies))


def identity_weights(m: int) -> list[Weight]:
    """The m unit vectors; preferences under these reveal per-objective
    dominance."""
    return [make_weight(np.eye(m)[i]) for i in range(m)]


def dominates(a, b) -> bool:
    """Pareto dominance: a >= b everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return bool((a >= b).all() and (a > b).any())


def brute_force_frontier(returns) -> list[int]:
    """Indices of vectors dominated by no other; duplicates all retained.
    Exhaustive pairwise check."""
    arr = np.asarray(returns, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DimensionMismatch("need a non-empty list of return vectors")
    n = arr.shape[0]
    ge = (arr[:, None, :] >= arr[None, :, :]).all(axis=2)
    gt = (arr[:, None, :] > arr[None, :, :]).any(axis=2)
    dominated = (ge & gt).any(axis=0)
    return [i for i in range(n) if not dominated[i]]


class _SegmentTeacherView:
    """Pre-built segments and a label cache for one frontier run."""

    def __init__(self, ps: FinitePolicySet, teacher, H: int, cfg: DiscountConfig):
        self.teacher = teacher
        self.cfg = cfg
        self.segments = [ps.segment(i, H) for i in range(len(ps))]
        self._cache: dict[tuple[int, int, tuple], float] = {}

    def label(self, i: int, j: int, w: Weight) -> float:
        """Teacher's label for (first=i, second=j) under w."""
        key = (i, j, w.values)
        if key not in self._cache:
            seg_i, gt_i = self.segments[i]
            seg_j, gt_j = self.segments[j]
            q = TeacherQuery(
                f"frontier{next(_query_ids)}",
                seg_i,
                seg_j,
                w,
                gt_first=gt_i,
                gt_second=gt_j,
            )
            self._cache[key] = self.teacher(q)
        return self._cache[key]

    def strictly_beats(self, i: int, j: int, w: Weight) -> bool:
        return self.label(j, i, w) == SECOND_PREFERRED


def _require_horizon(
    ps: FinitePolicySet, H: int, cfg: DiscountConfig, min_gap: float | None
) -> None:
    if H >= ps.full_length:
        return  # full-episode comparison needs no certificate
    if min_gap is None:
        raise InsufficientHorizon(
            f"H={H} is shorter than the longest rollout ({ps.full_length}) "
            "and no minimum return gap was certified"
        )
    needed = min_segment_length(min_gap, cfg, ps.r_max())
    if H < needed:
        raise InsufficientHorizon(
            f"H={H} is below the certified bound {needed} for gap {min_gap}"
        )


def convex_frontier(
    ps: FinitePolicySet,
    weight_grid: list[Weight],
    teacher,
    H: int,
    cfg: DiscountConfig,
    min_gap: float | None = None,
) -> list[int]:
    """Union over grid weights of the per-weight unbeaten policies.

    Per weight, a champion tournament finds an unbeaten policy, then
    every policy the champion does not strictly beat is retained (ties
    keep all tied policies).  Sound for teachers satisfying symmetry,
    consistency, and transitivity.
    """
    _require_horizon(ps, H, cfg, min_gap)
    view = _SegmentTeacherView(ps, teacher, H, cfg)
    kept: set[int] = set()
    n = len(ps)
    for w in weight_grid:
        champion = 0
        for i in range(1, n):
            if view.label(champion, i, w) == SECOND_PREFERRED:
                champion = i
        for i in range(n):
            if not view.strictly_beats(champion, i, w):
                kept.add(i)
    return sorted(kept)


def nonconvex_frontier(
    ps: FinitePolicySet,
    teacher,
    H: int,
    cfg: DiscountConfig,
    min_gap: float | None = None,
) -> list[int]:
    """Insertion pass under the identity weight set.

    Candidates are processed in order: a candidate strictly preferred to
    an incumbent under every unit weight removes it; a candidate strictly
    beaten under every unit weight is skipped; otherwise it joins.
    """
    _require_horizon(ps, H, cfg, min_gap)
    view = _SegmentTeacherView(ps, teacher, H, cfg)
    unit = identity_weights(ps.m)

    def wins_all(i: int, j: int) -> bool:
        return all(view.strictly_beats(i, j, w) for w in unit)

    kept: list[int] = []
    for cand in range(len(ps)):
        skip = False
        for inc in list(kept):
            if wins_all(cand, inc):
                kept.remove(inc)
            elif wins_all(inc, cand):
                skip = True
                break
        if not skip:
            kept.append(cand)
    return sorted(kept)


def enumerate_policies(env: Env, max_count: int = 1024) -> FinitePolicySet:
    """All deterministic policies of a small deterministic task, each
    with its exact rollout rewards.

    Fruit Tree enumerates the 2^depth root-to-leaf paths; DST one
    shortest path per treasure.  Stochastic tasks are excluded.
    """
    name = env.spec.name
    if name == "ft":
        leaves = env.n_leaves
        if leaves > max_count:
            raise TooLarge(f"{leaves} policies exceed max_count={max_count}")
        policies = []
        for leaf in range(leaves):
            rewards = np.zeros((env.depth, 6))
            rewards[-1] = env.leaf_values[leaf]
            policies.append(RolloutPolicy(f"leaf{leaf + env.n_internal}", rewards))
        return FinitePolicySet(policies)
    if name == "dst":
        treasures = sorted(env.treasures.items(), key=lambda kv: kv[1])
        if len(treasures) > max_count:
            raise TooLarge(f"{len(treasures)} policies exceed max_count={max_count}")
        policies = []
        for (row, col), value in treasures:
            # Right along the surface, then straight down: both legs stay
            # in water because seabed depth is nondecreasing in column.
            T = row + col
            rewards = np.zeros((T, 2))
            rewards[:, 1] = -1.0
            rewards[-1, 0] = value
            policies.append(RolloutPolicy(f"treasure_{row}_{col}", rewards))
        return FinitePolicySet(policies)
    raise TooLarge(f"{name} is stochastic or too large to enumerate")
