"""Shared domain types: weights on the simplex, segments, preferences,
and discounted-return arithmetic.

All types here are immutable value objects and safe to share between
threads.  Return vectors are plain ``numpy.ndarray`` of length ``m``
(one entry per objective); the helpers validate dimensions at the
boundaries instead of wrapping arrays in another class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadDimension,
    BadLabel,
    DimensionMismatch,
    LengthMismatch,
    NegativeComponent,
    NotNormalized,
)

# Absolute tolerance for simplex membership.  Double precision over the
# objective counts we support (m <= 6) keeps rounding error far below this.
SIMPLEX_ATOL = 1e-9

#: Valid preference labels.  1.0 means the *second* segment of a pair is
#: strictly preferred, 0.0 the first, 0.5 indeterminate.  One constant so
#: the convention cannot drift between modules.
FIRST_PREFERRED = 0.0
SECOND_PREFERRED = 1.0
INDIFFERENT = 0.5
VALID_LABELS = (FIRST_PREFERRED, INDIFFERENT, SECOND_PREFERRED)


@dataclass(frozen=True)
class Weight:
    """A point on the (m-1)-simplex assigning importance to each objective.

    Construct through :func:`make_weight`, which validates instead of
    renormalizing, so corrupt inputs fail loudly.
    """

    values: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Segment:
    """A length-H run of (state id, action id) pairs from one episode.

    ``episode_id`` and ``start`` record provenance inside the replay
    buffer so ground-truth rewards can be re-derived for scripted
    labeling; they are optional for synthetic segments.
    """

    steps: tuple[tuple[object, int], ...]
    episode_id: int | None = None
    start: int | None = None

    def __post_init__(self) -> None:
        if len(self.steps) < 1:
            raise LengthMismatch("segment must contain at least one step")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> tuple[object, ...]:
        return tuple(s for s, _ in self.steps)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(a for _, a in self.steps)


@dataclass(frozen=True)
class PreferenceRecord:
    """A labeled comparison (first, second, weight, label)."""

    first: Segment
    second: Segment
    weight: Weight
    label: float

    def __post_init__(self) -> None:
        if self.label not in VALID_LABELS:
            raise BadLabel(f"label must be one of {VALID_LABELS}, got {self.label!r}")


@dataclass(frozen=True)
class DiscountConfig:
    """Discount factor for trading off immediate and long-term rewards."""

    gamma: float = 0.99

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise BadDimension(f"gamma must lie in (0, 1), got {self.gamma}")


def make_weight(raw: Sequence[float]) -> Weight:
    """Validate ``raw`` as a point on the simplex.

    Rejects rather than renormalizes: a negative component raises
    NegativeComponent, a sum off by more than 1e-9 raises NotNormalized,
    fewer than two objectives raises BadDimension.
    """
    vals = [float(v) for v in raw]
    if len(vals) < 2:
        raise BadDimension(f"need at least 2 objectives, got {len(vals)}")
    for v in vals:
        if v < 0.0:
            raise NegativeComponent(f"weight component {v} is negative")
    total = sum(vals)
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise NotNormalized(f"weight components sum to {total}, expected 1")
    return Weight(tuple(vals))


def sample_weights(count: int, m: int, seed: int) -> list[Weight]:
    """Draw ``count`` i.i.d. uniform points on the (m-1)-simplex.

    Uses the exponential-spacing construction: m independent standard
    exponentials normalized by their sum (equivalent to a flat
    Dirichlet).  Deterministic for a fixed seed.
    """
    if m < 2:
        raise BadDimension(f"need at least 2 objectives, got {m}")
    if count < 1:
        raise BadDimension(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    draws = rng.exponential(scale=1.0, size=(count, m))
    draws /= draws.sum(axis=1, keepdims=True)
    return [Weight(tuple(float(v) for v in row)) for row in draws]


def simplex_grid(m: int, resolution: int) -> list[Weight]:
    """All weights with components k/resolution, k integer (barycentric
    lattice).  For m=2 this is the uniform 1-D grid with resolution+1
    points."""
    if m < 2:
        raise BadDimension(f"need at least 2 objectives, got {m}")
    if resolution < 1:
        raise BadDimension(f"resolution must be positive, got {resolution}")
    out: list[Weight] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            out.append(
                Weight(tuple(k / resolution for k in prefix + [remaining]))
            )
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], resolution, m)
    return out


def default_eval_grid(m: int) -> list[Weight]:
    """Fixed evaluation grids: 101 weights for m=2, 66 for m=3 and 252
    for m=6 (barycentric lattices); intermediate m uses resolution 8."""
    resolution = {2: 100, 3: 10, 6: 5}.get(m, 8)
    return simplex_grid(m, resolution)


def discounted_return(
    segment: Segment, rewards: Sequence[Sequence[float]], cfg: DiscountConfig
) -> np.ndarray:
    """Sum gamma^t * r_t over the segment, component-wise.

    Discounting restarts at t=0 for every segment regardless of where it
    was cut from its episode.
    """
    arr = np.asarray(rewards, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != len(segment):
        raise LengthMismatch(
            f"expected {len(segment)} per-step rewards, got shape {arr.shape}"
        )
    discounts = cfg.gamma ** np.arange(arr.shape[0])
    return discounts @ arr


def weighted_return(r: np.ndarray, w: Weight) -> float:
    """Inner product w . r scalarizing a return vector."""
    arr = np.asarray(r, dtype=np.float64)
    if arr.shape != (w.m,):
        raise DimensionMismatch(
            f"return has shape {arr.shape}, weight has {w.m} components"
        )
    return float(arr @ w.as_array())


def discount_weights(gamma: float, horizon: int) -> np.ndarray:
    """gamma^t for t = 0..horizon-1."""
    return gamma ** np.arange(horizon, dtype=np.float64)
