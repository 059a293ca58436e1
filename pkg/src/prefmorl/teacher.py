"""Preference providers.

The scripted teacher labels a segment pair by comparing weighted
discounted ground-truth returns; it is the reproducible evaluation
device.  Asynchronous teachers (a human behind the labeling service)
implement the same submit/harvest contract but may answer late or never;
the trainer proceeds with whatever labels exist.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FIRST_PREFERRED,
    INDIFFERENT,
    SECOND_PREFERRED,
    DiscountConfig,
    Segment,
    Weight,
    discount_weights,
)
from .errors import BadBound, MissingGroundTruth

# Two returns closer than this compare as equal (label 0.5); exact float
# equality would be brittle.
RETURN_EQ_TOL = 1e-12

_query_counter = itertools.count()


@dataclass(frozen=True)
class TeacherQuery:
    """One comparison request: which of two segments is better under
    ``weight``?

    Both segments fill one H-step comparison window.  A segment shorter
    than its partner is an episode tail: its episode ended inside the
    window and nothing accrues afterwards, so sums simply run over the
    steps it has.  ``gt_first``/``gt_second`` hold per-step ground-truth
    reward vectors (one row per step) and are present only in scripted
    mode.  ``created_at`` is a monotonic counter, not wall time, so runs
    stay replayable.
    """

    query_id: str
    first: Segment
    second: Segment
    weight: Weight
    gt_first: np.ndarray | None = None
    gt_second: np.ndarray | None = None
    created_at: int = field(default_factory=lambda: next(_query_counter))

    @property
    def window(self) -> int:
        return max(len(self.first), len(self.second))

    def swapped(self) -> "TeacherQuery":
        return TeacherQuery(
            query_id=self.query_id + ":swap",
            first=self.second,
            second=self.first,
            weight=self.weight,
            gt_first=self.gt_second,
            gt_second=self.gt_first,
            created_at=self.created_at,
        )


def scripted_preference(q: TeacherQuery, cfg: DiscountConfig) -> float:
    """Label from ground truth: 1 if the second segment's weighted
    discounted return is larger, 0 if smaller, 0.5 within tolerance.
    Each segment's sum runs over its own steps, discounted from the
    window start."""
    if q.gt_first is None or q.gt_second is None:
        raise MissingGroundTruth(f"query {q.query_id} has no ground-truth rewards")
    w = q.weight.as_array()
    r0 = float(
        discount_weights(cfg.gamma, len(q.first)) @ (np.asarray(q.gt_first) @ w)
    )
    r1 = float(
        discount_weights(cfg.gamma, len(q.second)) @ (np.asarray(q.gt_second) @ w)
    )
    if abs(r1 - r0) <= RETURN_EQ_TOL:
        return INDIFFERENT
    return SECOND_PREFERRED if r1 > r0 else FIRST_PREFERRED


class ScriptedTeacher:
    """Answers every submitted query immediately from ground truth."""

    def __init__(self, cfg: DiscountConfig):
        self.cfg = cfg
        self._pending: list[TeacherQuery] = []

    def submit(self, queries: list[TeacherQuery]) -> None:
        self._pending.extend(queries)

    def harvest(self) -> list[tuple[TeacherQuery, float]]:
        out = [(q, scripted_preference(q, self.cfg)) for q in self._pending]
        self._pending = []
        return out

    def __call__(self, q: TeacherQuery) -> float:
        return scripted_preference(q, self.cfg)


class DelayedScriptedTeacher(ScriptedTeacher):
    """Scripted teacher whose answers arrive ``delay`` harvest cycles
    late, mirroring the timing of an asynchronous labeler."""

    def __init__(self, cfg: DiscountConfig, delay: int = 1):
        super().__init__(cfg)
        self.delay = delay
        self._queue: list[list[TeacherQuery]] = []

    def submit(self, queries: list[TeacherQuery]) -> None:
        self._queue.append(list(queries))

    def harvest(self) -> list[tuple[TeacherQuery, float]]:
        if len(self._queue) <= self.delay:
            return []
        ready = self._queue.pop(0)
        return [(q, scripted_preference(q, self.cfg)) for q in ready]


@dataclass
class PropertyReport:
    """Outcome of checking symmetry, consistency, and transitivity over
    a query list.  Each entry names the offending query or triple."""

    symmetry_violations: list[str] = field(default_factory=list)
    consistency_violations: list[str] = field(default_factory=list)
    transitivity_violations: list[tuple[str, str, str]] = field(default_factory=list)
    queries_checked: int = 0

    @property
    def total_violations(self) -> int:
        return (
            len(self.symmetry_violations)
            + len(self.consistency_violations)
            + len(self.transitivity_violations)
        )

    @property
    def ok(self) -> bool:
        return self.total_violations == 0


def teacher_properties_check(
    teacher, queries: list[TeacherQuery], cfg: DiscountConfig
) -> PropertyReport:
    """Check a deterministic teacher for symmetry (swapping the pair
    flips strict labels and fixes 0.5), consistency (re-asking repeats
    the label), and transitivity (no strict preference 3-cycle under one
    weight).  Violations are itemized, never raised."""
    report = PropertyReport(queries_checked=len(queries))
    answer = teacher if callable(teacher) else teacher.__call__
    # Strict relations per weight for the cycle check: wins[w][a] = set of
    # segments beaten by a.
    wins: dict[tuple, dict[Segment, set[Segment]]] = {}
    for q in queries:
        label = answer(q)
        again = answer(q)
        if again != label:
            report.consistency_violations.append(q.query_id)
        swapped = answer(q.swapped())
        if label == INDIFFERENT:
            if swapped != INDIFFERENT:
                report.symmetry_violations.append(q.query_id)
        elif not math.isclose(label + swapped, 1.0):
            report.symmetry_violations.append(q.query_id)
        wkey = q.weight.values
        table = wins.setdefault(wkey, {})
        if label == SECOND_PREFERRED:
            table.setdefault(q.second, set()).add(q.first)
        elif label == FIRST_PREFERRED:
            table.setdefault(q.first, set()).add(q.second)
    for table in wins.values():
        for a, beaten in table.items():
            for b in beaten:
                for c in table.get(b, ()):  # a > b > c
                    if a in table.get(c, ()):  # c > a closes the cycle
                        report.transitivity_violations.append(
                            (repr(a.steps), repr(b.steps), repr(c.steps))
                        )
    return report


def min_segment_length(delta: float, cfg: DiscountConfig, r_max: float) -> int:
    """Smallest integer segment length H whose truncation error cannot
    flip a comparison between returns separated by at least ``delta``:
    the least H with gamma^H <= delta * (1 - gamma) / (2 * r_max),
    clamped to 1 when even a single step suffices."""
    if delta <= 0:
        raise BadBound(f"gap delta must be positive, got {delta}")
    if r_max <= 0:
        raise BadBound(f"r_max must be positive, got {r_max}")
    ratio = delta * (1.0 - cfg.gamma) / (2.0 * r_max)
    if ratio >= 1.0:
        return 1
    return max(1, math.ceil(math.log(ratio) / math.log(cfg.gamma)))
