"""Discretized decision process: battery grid, exogenous states, kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .model import BatteryParams, ExogenousState, ModelError

ROW_TOL = 1e-9
HOURS = 24


class MdpError(ValueError):
    """Invalid distribution, kernel or grid."""


def round_to_step(values, step: float):
    """Round to the nearest multiple of ``step``; halves round up.

    Idempotent on grid values.  The intermediate rounding to 9 decimals
    absorbs representation error such as ``0.7 / 0.1 = 6.999...``.
    """
    q = np.floor(np.round(np.asarray(values, dtype=float) / step, 9) + 0.5)
    out = q * step
    # strip -0.0 and representation noise from the product
    out = np.round(out, 12) + 0.0
    return out if np.ndim(out) else float(out)


def level_grid(b_max: float, step: float) -> np.ndarray:
    n = b_max / step
    if abs(n - round(n)) > 1e-9:
        raise MdpError(f"b_max={b_max} is not a multiple of the battery step {step}")
    return np.round(np.arange(int(round(n)) + 1) * step, 12)


@dataclass(frozen=True)
class Grids:
    battery_levels: np.ndarray
    price_levels: np.ndarray
    demand_levels: np.ndarray
    modes: tuple
    battery_step: float
    price_step: Optional[float] = None

    def __post_init__(self):
        for name in ("battery_levels", "price_levels", "demand_levels"):
            arr = getattr(self, name)
            if len(arr) == 0:
                raise MdpError(f"{name} is empty")
            if np.any(np.diff(arr) <= 0):
                raise MdpError(f"{name} is not strictly increasing")
        if self.battery_levels[0] != 0:
            raise MdpError("battery grid must start at 0")
        if not self.modes:
            raise MdpError("no modulating states")

    @property
    def b_max(self) -> float:
        return float(self.battery_levels[-1])


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix over exogenous state indices (CSR)."""

    probs: sp.csr_array

    def __post_init__(self):
        m = self.probs
        if m.shape[0] != m.shape[1]:
            raise MdpError(f"kernel must be square, got {m.shape}")
        if m.nnz and m.data.min() < 0:
            raise MdpError("kernel has negative entries")
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            raise MdpError(f"kernel row {bad[0]} sums to {sums[bad[0]]!r}")

    @classmethod
    def from_dense(cls, dense) -> "TransitionKernel":
        m = sp.csr_array(np.asarray(dense, dtype=float))
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m)

    def row(self, i: int) -> np.ndarray:
        return self.probs[[i], :].toarray().ravel()

    def dense(self) -> np.ndarray:
        return self.probs.toarray()

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass
class Mdp:
    params: BatteryParams
    grids: Grids
    kernel: TransitionKernel
    alpha: float
    states: list
    kind: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise MdpError(f"discount factor must be in (0, 1), got {self.alpha}")
        if len(self.states) != self.kernel.n:
            raise MdpError("kernel size does not match the number of states")
        if abs(self.grids.b_max - self.params.b_max) > 1e-9:
            raise MdpError("battery grid does not end at b_max")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_levels(self) -> int:
        return len(self.grids.battery_levels)

    @property
    def levels(self) -> np.ndarray:
        return self.grids.battery_levels

    @cached_property
    def prices(self) -> np.ndarray:
        return np.array([s.price for s in self.states], dtype=float)

    @cached_property
    def demands(self) -> np.ndarray:
        return np.array([s.demand for s in self.states], dtype=float)

    @cached_property
    def modes(self) -> np.ndarray:
        return np.array([s.mode for s in self.states], dtype=np.int64)

    @property
    def p_max(self) -> float:
        return float(self.prices.max())

    @property
    def p_min(self) -> float:
        return float(self.prices.min())

    @property
    def value_bound(self) -> float:
        """Upper bound on discounted cost from any state."""
        d_max = float(self.demands.max())
        return self.p_max * (d_max + self.params.b_max / self.params.eta_c) / (1 - self.alpha)

    @cached_property
    def deltas(self) -> np.ndarray:
        """``deltas[b, k]``: battery change when moving from level b to level k."""
        lv = self.levels
        return lv[None, :] - self.params.xi * lv[:, None]

    @cached_property
    def control_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive grid-index bounds ``(lo, hi)`` of the control set, shape (n_x, n_b)."""
        p = self.params
        lv = self.levels
        step = self.grids.battery_step
        retained = p.xi * lv
        dis = np.array([p.max_discharge(b) for b in lv])
        chg = np.array([p.max_charge(b) for b in lv])
        lo = np.maximum.reduce([
            np.zeros((self.n_states, lv.size)),
            retained[None, :] - self.demands[:, None] / p.eta_d,
            np.broadcast_to(retained - dis, (self.n_states, lv.size)),
        ])
        hi = np.minimum(p.b_max, retained + chg * p.eta_c)
        hi = np.broadcast_to(hi, lo.shape)
        lo_idx = np.ceil(np.round(lo / step, 9)).astype(np.int64)
        hi_idx = np.floor(np.round(hi / step, 9)).astype(np.int64)
        if np.any(lo_idx > hi_idx):
            x, b = np.argwhere(lo_idx > hi_idx)[0]
            raise MdpError(f"control set of state {x} at level {lv[b]} contains no grid point")
        return lo_idx, np.ascontiguousarray(hi_idx)

    @cached_property
    def stay_index(self) -> np.ndarray:
        """Feasible target closest to doing nothing, per (x, b)."""
        lo, hi = self.control_bounds
        want = np.round(self.params.xi * self.levels / self.grids.battery_step)
        return np.clip(want[None, :].astype(np.int64), lo, hi)

    def state_index(self, price: float, demand: float, mode: int = 0) -> int:
        for i, s in enumerate(self.states):
            if s.mode == mode and math.isclose(s.price, price) and math.isclose(s.demand, demand):
                return i
        raise KeyError((price, demand, mode))


def _check_dist(dist: Mapping[float, float], what: str) -> dict:
    if not dist:
        raise MdpError(f"{what} distribution is empty")
    if any(v < 0 for v in dist.values()):
        raise MdpError(f"{what} distribution has negative mass")
    total = sum(dist.values())
    if abs(total - 1.0) > ROW_TOL:
        raise MdpError(f"{what} distribution sums to {total}, not 1")
    return {float(k): float(v) for k, v in sorted(dist.items()) if v > 0}


def _grids(params, states, battery_step, price_step, modes) -> Grids:
    return Grids(
        battery_levels=level_grid(params.b_max, battery_step),
        price_levels=np.unique([s.price for s in states]),
        demand_levels=np.unique([s.demand for s in states]),
        modes=tuple(modes),
        battery_step=battery_step,
        price_step=price_step,
    )


def build_iid(price_dist, demand_dist, params: BatteryParams, alpha: float,
              battery_step: float = 0.5, price_step: Optional[float] = None) -> Mdp:
    """Prices and demands i.i.d. over time and mutually independent."""
    prices = _check_dist(price_dist, "price")
    demands = _check_dist(demand_dist, "demand")
    states, mass = [], []
    for p, fp in prices.items():
        for d, fd in demands.items():
            states.append(ExogenousState(demand=d, price=p, mode=0))
            mass.append(fp * fd)
    row = np.array(mass)
    kernel = TransitionKernel.from_dense(np.tile(row, (len(states), 1)))
    grids = _grids(params, states, battery_step, price_step, (0,))
    return Mdp(params, grids, kernel, alpha, states, kind="iid")


def build_markov_prices(price_transition, prices: Sequence[float],
                        demand: Union[float, Mapping[float, Mapping[float, float]]],
                        params: BatteryParams, alpha: float,
                        battery_step: float = 0.5, price_step: Optional[float] = None) -> Mdp:
    """Markov-modulated prices; transitions depend on the current price only.

    ``demand`` is either a constant or, per price level, the demand
    distribution that accompanies that price.
    """
    T = np.asarray(price_transition, dtype=float)
    prices = [float(p) for p in prices]
    k = len(prices)
    if T.shape != (k, k):
        raise MdpError(f"transition matrix shape {T.shape} does not match {k} prices")
    if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > ROW_TOL):
        raise MdpError("price transition matrix is not row-stochastic")
    if len(set(prices)) != k:
        raise MdpError("price levels must be distinct")

    if isinstance(demand, Mapping):
        per_price = [_check_dist(demand[p], f"demand at price {p}") for p in prices]
    else:
        per_price = [{float(demand): 1.0} for _ in prices]

    states, owner, cond = [], [], []
    for i, p in enumerate(prices):
        for d, q in per_price[i].items():
            states.append(ExogenousState(demand=d, price=p, mode=0))
            owner.append(i)
            cond.append(q)
    owner = np.array(owner)
    cond = np.array(cond)
    dense = T[owner][:, owner] * cond[None, :]
    kernel = TransitionKernel.from_dense(dense)
    grids = _grids(params, states, battery_step, price_step, (0,))
    return Mdp(params, grids, kernel, alpha, states, kind="markov_prices")


def build_hourly(empirical, params: BatteryParams, alpha: float,
                 battery_step: float = 0.5, price_step: Optional[float] = 5.0) -> Mdp:
    """Hour-of-day modulated model, independent from hour to hour.

    ``empirical`` is a sequence of 24 mappings ``(price, demand) -> mass``
    (or an object exposing them as ``.hours``).  The next state is drawn
    from the distribution of the following hour regardless of the current
    price and demand.
    """
    hours = getattr(empirical, "hours", empirical)
    if len(hours) != HOURS:
        raise MdpError(f"expected {HOURS} hourly distributions, got {len(hours)}")
    states, blocks = [], []
    for h, dist in enumerate(hours):
        if not dist:
            raise MdpError(f"hour {h} has no observations")
        total = sum(dist.values())
        if abs(total - 1.0) > ROW_TOL:
            raise MdpError(f"hour {h} distribution sums to {total}, not 1")
        cells = sorted((float(p), float(d), float(m)) for (p, d), m in dist.items() if m > 0)
        start = len(states)
        states.extend(ExogenousState(demand=d, price=p, mode=h) for p, d, _ in cells)
        blocks.append((start, np.array([m for _, _, m in cells])))

    rows, cols, vals = [], [], []
    for h, (start, mass) in enumerate(blocks):
        nstart, nmass = blocks[(h + 1) % HOURS]
        n_here = blocks[h + 1][0] - start if h + 1 < HOURS else len(states) - start
        for i in range(start, start + n_here):
            rows.extend([i] * nmass.size)
            cols.extend(range(nstart, nstart + nmass.size))
            vals.extend(nmass)
    n = len(states)
    probs = sp.csr_array((np.array(vals), (np.array(rows), np.array(cols))), shape=(n, n))
    probs.sort_indices()
    grids = _grids(params, states, battery_step, price_step, range(HOURS))
    return Mdp(params, grids, TransitionKernel(probs), alpha, states, kind="hourly")
