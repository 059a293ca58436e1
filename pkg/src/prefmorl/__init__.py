"""Preference-based multi-objective reinforcement learning.

A library and CLI for learning vector-valued reward models from
weight-conditioned pairwise preferences, training weight-conditioned
policies with envelope multi-objective Q-learning on top of them, and
checking the resulting Pareto frontiers against brute-force oracles.
"""

from .core import (
    DiscountConfig,
    PreferenceRecord,
    Segment,
    Weight,
    discounted_return,
    make_weight,
    sample_weights,
    simplex_grid,
    weighted_return,
)

__version__ = "0.1.0"

__all__ = [
    "DiscountConfig",
    "PreferenceRecord",
    "Segment",
    "Weight",
    "discounted_return",
    "make_weight",
    "sample_weights",
    "simplex_grid",
    "weighted_return",
    "__version__",
]
