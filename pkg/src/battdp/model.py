"""Battery dynamics, feasible controls and per-slot costs.

The decision in every slot is the next battery level ``beta``.  Once it is
fixed, the grid purchase for the user (``a1``), the purchase for charging
(``a2``) and the battery discharge (``a3``) follow from :func:`decompose`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

RateFn = Callable[[float], float]

# absolute slack for floating point comparisons on kWh quantities
EPS = 1e-9


class ModelError(ValueError):
    """Invalid battery parameters or an infeasible decision."""


class DynamicsError(ModelError):
    """Battery level left ``[0, b_max]``."""


@dataclass(frozen=True)
class Replacement:
    """Battery wear approximated by a geometric lifetime.

    Each charge or discharge breaks the battery with probability ``q``; the
    replacement costs ``cost``.
    """

    q: float
    cost: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ModelError(f"replacement probability must be in [0, 1], got {self.q}")
        if self.cost < 0:
            raise ModelError(f"replacement cost must be >= 0, got {self.cost}")


@dataclass(frozen=True)
class BatteryParams:
    b_max: float
    eta_c: float = 1.0
    eta_d: float = 1.0
    rate_charge: Optional[RateFn] = None
    rate_discharge: Optional[RateFn] = None
    xi: float = 1.0
    replacement: Optional[Replacement] = None

    def __post_init__(self):
        if not self.b_max > 0:
            raise ModelError(f"b_max must be positive, got {self.b_max}")
        for name in ("eta_c", "eta_d", "xi"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ModelError(f"{name} must be in (0, 1], got {v}")

    @property
    def efficient(self) -> bool:
        return self.eta_c == 1.0 and self.eta_d == 1.0

    @property
    def structured(self) -> bool:
        """True when the threshold structure of the optimal policy is guaranteed."""
        return self.replacement is None and self.xi == 1.0

    def max_charge(self, b: float) -> float:
        if self.rate_charge is None:
            return math.inf
        r = float(self.rate_charge(b))
        if r < 0:
            raise ModelError(f"rate_charge({b}) = {r} is negative")
        return r

    def max_discharge(self, b: float) -> float:
        if self.rate_discharge is None:
            return math.inf
        r = float(self.rate_discharge(b))
        if r < 0:
            raise ModelError(f"rate_discharge({b}) = {r} is negative")
        return r


@dataclass(frozen=True)
class ExogenousState:
    demand: float
    price: float
    mode: int = 0

    def __post_init__(self):
        if self.demand < 0:
            raise ModelError(f"demand must be >= 0, got {self.demand}")
        if self.price < 0:
            raise ModelError(f"price must be >= 0, got {self.price}")


@dataclass(frozen=True)
class Action:
    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) < -EPS:
            raise ModelError(f"negative purchase or discharge in {self}")
        if self.a2 > EPS and self.a3 > EPS:
            raise ModelError(f"simultaneous charge and discharge in {self}")

    @property
    def purchased(self) -> float:
        return self.a1 + self.a2


def control_set(params: BatteryParams, x: ExogenousState, b: float) -> tuple[float, float]:
    """Interval of feasible next battery levels from level ``b`` in state ``x``.

    Discharge is capped so that the delivered energy never exceeds the
    demand (no selling back), hence the ``d / eta_d`` term.
    """
    if b < -EPS or b > params.b_max + EPS:
        raise ModelError(f"battery level {b} outside [0, {params.b_max}]")
    r = params.xi * b
    lo = max(0.0, r - x.demand / params.eta_d, r - params.max_discharge(b))
    hi = min(params.b_max, r + params.max_charge(b) * params.eta_c)
    return lo, hi


def decompose(params: BatteryParams, x: ExogenousState, b: float, beta: float) -> Action:
    lo, hi = control_set(params, x, b)
    if beta < lo - EPS:
        raise ModelError(f"target {beta} below the lower control bound {lo}")
    if beta > hi + EPS:
        raise ModelError(f"target {beta} above the upper control bound {hi}")
    delta = beta - params.xi * b
    if delta > 0:
        return Action(a1=x.demand, a2=delta / params.eta_c, a3=0.0)
    if delta < 0:
        a1 = x.demand + params.eta_d * delta
        # a1 may dip below zero by rounding when discharging to the exact bound
        return Action(a1=max(a1, 0.0), a2=0.0, a3=-delta)
    return Action(a1=x.demand, a2=0.0, a3=0.0)


def immediate_cost(params: BatteryParams, x: ExogenousState, delta: float) -> float:
    """Cost of the slot when the battery moves by ``delta`` kWh."""
    up = max(delta, 0.0)
    down = max(-delta, 0.0)
    cost = (x.demand + up / params.eta_c - params.eta_d * down) * x.price
    if params.replacement is not None and delta != 0:
        cost += params.replacement.q * params.replacement.cost
    return cost


def step(params: BatteryParams, b: float, action: Action) -> float:
    nxt = params.xi * b + params.eta_c * action.a2 - action.a3
    if nxt < -EPS or nxt > params.b_max + EPS:
        raise DynamicsError(f"battery level {nxt} outside [0, {params.b_max}]")
    return min(max(nxt, 0.0), params.b_max)
