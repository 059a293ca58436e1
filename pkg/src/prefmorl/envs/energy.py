"""Energy storage management: charge and discharge a battery against
stochastic renewable generation, demand, and market price.

State is (storage, renewable, demand, price), all in kWh except price
(monetary units per kWh).  The scalar action is a discharge level:
positive discharges to meet demand, negative charges from renewables or
the grid.  The agent-facing action space is a discrete grid of levels.

Storage update and purchase amounts follow the positive-part arithmetic
below; the first reward component is the negated purchase cost (so that
maximization reduces cost), the second a -1 penalty whenever energy is
actually discharged (a > 0 with nonempty storage), in the interest of
battery lifespan.  Exogenous quantities advance by seeded bounded random
walks; episodes truncate at ``max_episode_len`` steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ActionOutOfRange, InvalidCell
from .base import Env, EnvSpec, StepOutcome


@dataclass(frozen=True)
class EnergyState:
    storage: float
    renewable: float
    demand: float
    price: float

    def __post_init__(self) -> None:
        for name in ("storage", "renewable", "demand", "price"):
            if getattr(self, name) < 0:
                raise InvalidCell(f"{name} must be nonnegative")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.storage, self.renewable, self.demand, self.price)


@dataclass(frozen=True)
class WalkParams:
    low: float
    high: float
    step: float
    initial: float


def energy_flows(
    storage: float, action: float, renewable: float, demand: float
) -> tuple[float, float, float]:
    """Purchase amounts and next storage for one step.

    Returns (g_charge, g_demand, next_storage_uncapped).  Charging beyond
    what renewables cover, or discharging more than is stored, forces a
    grid purchase.
    """
    pos = lambda x: max(x, 0.0)
    if action < 0:
        g_charge = pos(-action - pos(renewable - demand))
    else:
        g_charge = pos(action - storage)
    g_demand = pos(pos(demand - renewable) - pos(action))
    next_storage = pos(storage - action)
    return g_charge, g_demand, next_storage


class EnergyStorage(Env):
    def __init__(self, config: dict):
        super().__init__()
        self.storage_max = float(config["storage_max"])
        self.initial_storage = float(config["initial_storage"])
        self.levels = tuple(float(v) for v in config["action_levels"])
        self.action_bound = max(abs(v) for v in self.levels)
        self.walks = {
            key: WalkParams(**{k: float(v) for k, v in config[key].items()})
            for key in ("renewable", "demand", "price")
        }
        worst_step_cost = self.walks["price"].high * (
            self.walks["demand"].high + self.action_bound
        )
        max_len = int(config["max_episode_len"])
        self.spec = EnvSpec(
            name="energy",
            m=2,
            n_actions=len(self.levels),
            action_names=tuple(f"a={v:+.1f}" for v in self.levels),
            max_episode_len=max_len,
            segment_len=int(config["segment_len"]),
            hv_reference=(-worst_step_cost * max_len, -float(max_len)),
            reward_low=(-worst_step_cost, -1.0),
            reward_high=(0.0, 0.0),
            discrete=False,
        )

    def state_id(self, state: tuple) -> int:
        raise InvalidCell("energy states are continuous and have no dense id")

    def validate_state(self, state: tuple) -> EnergyState:
        """Typed view of an observation, checking the storage cap."""
        es = EnergyState(*state)
        if es.storage > self.storage_max + 1e-9:
            raise InvalidCell(
                f"storage {es.storage} exceeds the cap {self.storage_max}"
            )
        return es

    def is_terminal_state(self, state: tuple) -> bool:
        return False  # episodes only truncate

    def describe_state(self, state: tuple) -> dict:
        storage, renewable, demand, price = state
        return {
            "storage": storage,
            "renewable": renewable,
            "demand": demand,
            "price": price,
        }

    def _initial_state(self) -> tuple:
        return (
            self.initial_storage,
            self.walks["renewable"].initial,
            self.walks["demand"].initial,
            self.walks["price"].initial,
        )

    def _next_walk(self, value: float, params: WalkParams, rng: np.random.Generator) -> float:
        moved = value + rng.uniform(-params.step, params.step)
        return float(min(max(moved, params.low), params.high))

    def transition(
        self,
        state: tuple,
        action: float,
        rng: np.random.Generator | None = None,
        next_exogenous: tuple[float, float, float] | None = None,
    ) -> StepOutcome:
        action = float(action)
        if abs(action) > self.action_bound + 1e-12:
            raise ActionOutOfRange(
                f"|{action}| exceeds the action bound {self.action_bound}"
            )
        storage, renewable, demand, price = state
        g_charge, g_demand, next_storage = energy_flows(
            storage, action, renewable, demand
        )
        r1 = -price * (g_demand + g_charge)
        r2 = -1.0 if (action > 0 and storage > 0) else 0.0
        next_storage = min(self.storage_max, next_storage)
        if next_exogenous is None:
            if rng is None:
                raise InvalidCell("exogenous processes need an rng or explicit values")
            next_exogenous = (
                self._next_walk(renewable, self.walks["renewable"], rng),
                self._next_walk(demand, self.walks["demand"], rng),
                self._next_walk(price, self.walks["price"], rng),
            )
        return StepOutcome((next_storage, *next_exogenous), (r1, r2), False)

    def step(self, action: int) -> StepOutcome:
        """Episodic step taking a discrete level index."""
        return super().step(self.levels[int(action)])


def energy_step(
    env: EnergyStorage,
    state: tuple,
    action: float,
    next_exogenous: tuple[float, float, float] | None = None,
) -> StepOutcome:
    """Pure single-step transition with the exogenous advance injected."""
    return env.transition(state, action, next_exogenous=next_exogenous)
