"""Replay threshold policies on traces; savings sweep and pooling experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import solver
from .ingest import Trace, aggregate, fit_hourly
from .mdp import HOURS, Mdp, build_hourly
from .model import BatteryParams, ExogenousState, control_set, decompose, immediate_cost
from .thresholds import ThresholdTable, extract

log = logging.getLogger(__name__)

SATURATION_RTOL = 1e-3


class ConfigurationError(ValueError):
    pass


@dataclass
class RunResult:
    discounted_cost: float
    undiscounted_cost: float
    per_hour_purchases: np.ndarray
    battery_trajectory: np.ndarray
    operation_count: int
    purchases: np.ndarray = field(repr=False, default=None)
    unmatched: int = 0  # slots whose (price, demand) cell was not seen in training

    def to_dict(self, trajectory: bool = False) -> dict:
        out = {
            "discounted_cost": self.discounted_cost,
            "undiscounted_cost": self.undiscounted_cost,
            "per_hour_purchases": [float(v) for v in self.per_hour_purchases],
            "operation_count": self.operation_count,
            "unmatched_slots": self.unmatched,
        }
        if trajectory:
            out["battery_trajectory"] = [float(v) for v in self.battery_trajectory]
        return out


def _check_aligned(price: Trace, demand: Trace):
    if len(price) == 0 or len(demand) == 0:
        raise ConfigurationError("empty trace")
    if len(price) != len(demand) or np.any(price.timestamps != demand.timestamps):
        raise ConfigurationError("price and demand traces are not aligned")


def _hour_means(values: np.ndarray, hours: np.ndarray) -> np.ndarray:
    out = np.zeros(HOURS)
    for h in range(HOURS):
        sel = hours == h
        if sel.any():
            out[h] = values[sel].mean()
    return out


class StateMatcher:
    """Maps observed (price, demand, hour) to the nearest trained state of that hour."""

    def __init__(self, mdp: Mdp):
        if mdp.n_states == 0:
            raise ConfigurationError("model has no trained states")
        self.pstep = mdp.grids.price_step or 1.0
        self.dstep = mdp.grids.battery_step
        self.by_mode = {}
        for m in np.unique(mdp.modes):
            idx = np.flatnonzero(mdp.modes == m)
            self.by_mode[int(m)] = (idx, mdp.prices[idx], mdp.demands[idx])
        self.all = (np.arange(mdp.n_states), mdp.prices, mdp.demands)

    def __call__(self, price: float, demand: float, mode: int) -> tuple[int, bool]:
        idx, ps, ds = self.by_mode.get(int(mode), self.all)
        dist = ((ps - price) / self.pstep) ** 2 + ((ds - demand) / self.dstep) ** 2
        k = int(np.argmin(dist))
        return int(idx[k]), bool(dist[k] == 0.0)


def baseline(price: Trace, demand: Trace, alpha: float) -> float:
    """Discounted cost of buying all demand directly from the grid."""
    _check_aligned(price, demand)
    disc = alpha ** np.arange(len(price))
    return float(np.sum(demand.values * price.values * disc))


def threshold_target(params: BatteryParams, x: ExogenousState, b: float,
                     beta_minus: float, beta_plus: float) -> float:
    lo, hi = control_set(params, x, b)
    r = params.xi * b
    if r <= beta_minus:
        return min(beta_minus, hi)
    if r >= beta_plus:
        return max(beta_plus, lo)
    return r


def replay(mdp: Mdp, table: ThresholdTable, price: Trace, demand: Trace,
           b0: float = 0.0, alpha: Optional[float] = None, params: Optional[BatteryParams] = None
           ) -> RunResult:
    """Operate the threshold policy on observed traces and account the costs."""
    _check_aligned(price, demand)
    params = params or mdp.params
    alpha = mdp.alpha if alpha is None else alpha
    if not 0 <= b0 <= params.b_max:
        raise ConfigurationError(f"initial level {b0} outside [0, {params.b_max}]")
    if len(table) != mdp.n_states:
        raise ConfigurationError("threshold table does not match the model")
    match = StateMatcher(mdp)
    hours = price.hours
    T = len(price)
    traj = np.empty(T + 1)
    bought = np.empty(T)
    costs = np.empty(T)
    ops = unmatched = 0
    b = float(b0)
    for t in range(T):
        p, d, h = float(price.values[t]), float(demand.values[t]), int(hours[t])
        x = ExogenousState(demand=d, price=p, mode=h)
        i, exact = match(p, d, h)
        unmatched += not exact
        traj[t] = b
        beta = threshold_target(params, x, b, table.beta_minus[i], table.beta_plus[i])
        act = decompose(params, x, b, beta)
        costs[t] = immediate_cost(params, x, beta - params.xi * b)
        bought[t] = act.purchased
        ops += act.a2 > 0 or act.a3 > 0
        b = min(max(beta, 0.0), params.b_max)
    traj[T] = b
    disc = alpha ** np.arange(T)
    return RunResult(
        discounted_cost=float(np.sum(costs * disc)),
        undiscounted_cost=float(np.sum(costs)),
        per_hour_purchases=_hour_means(bought, hours),
        battery_trajectory=traj,
        operation_count=int(ops),
        purchases=bought,
        unmatched=int(unmatched),
    )


def baseline_purchases(price: Trace, demand: Trace) -> np.ndarray:
    _check_aligned(price, demand)
    return _hour_means(demand.values, price.hours)


@dataclass
class Trained:
    mdp: Mdp
    solution: solver.Solution
    table: ThresholdTable


def train(price: Trace, demand: Trace, params: BatteryParams, alpha: float,
          battery_step: float = 0.5, price_step: float = 5.0, method: str = "policy",
          tol: float = 1e-6, max_iters: int = 100_000, independent: bool = False) -> Trained:
    """Fit hourly distributions, solve the model and extract thresholds."""
    emp = fit_hourly(price.discretized(price_step), demand.discretized(battery_step), independent)
    mdp = build_hourly(emp, params, alpha, battery_step, price_step)
    if method == "policy":
        sol = solver.policy_iteration(mdp, max_iters=min(max_iters, 10_000))
    elif method == "value":
        sol = solver.value_iteration(mdp, tol=tol, max_iters=max_iters)
    else:
        raise ConfigurationError(f"unknown solver method {method!r}")
    table = extract(mdp, sol.policy) if params.structured else None
    return Trained(mdp, sol, table)


@dataclass
class SweepPoint:
    b_max: float
    savings: float
    savings_undiscounted: float
    cost: float
    baseline: float
    saturated: bool = False
    result: Optional[RunResult] = field(default=None, repr=False)


@dataclass
class SweepResult:
    points: list
    saturation_size: Optional[float]
    baseline_purchases: np.ndarray = field(repr=False, default=None)


def _relative_close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def size_sweep(train_price: Trace, train_demand: Trace, eval_price: Trace, eval_demand: Trace,
               sizes: Sequence[float], alpha: float, template: Optional[BatteryParams] = None,
               battery_step: float = 0.5, price_step: float = 5.0, method: str = "policy",
               independent: bool = False, b0: float = 0.0) -> SweepResult:
    """Relative savings of the optimal policy for each battery size."""
    sizes = [float(s) for s in sizes]
    if any(s < 0 for s in sizes) or sizes != sorted(sizes):
        raise ConfigurationError("sizes must be non-negative and ascending")
    template = template or BatteryParams(b_max=1.0)
    ep = eval_price.discretized(price_step)
    ed = eval_demand.discretized(battery_step)
    base = baseline(ep, ed, alpha)
    base_u = float(np.sum(ep.values * ed.values))
    points = []
    for s in sizes:
        if s == 0:
            points.append(SweepPoint(0.0, 0.0, 0.0, base, base))
            continue
        params = replace(template, b_max=s)
        tr = train(train_price, train_demand, params, alpha, battery_step, price_step,
                   method, independent=independent)
        res = replay(tr.mdp, tr.table, ep, ed, b0=min(b0, s))
        sav = 1 - res.discounted_cost / base if base > 0 else 0.0
        sav_u = 1 - res.undiscounted_cost / base_u if base_u > 0 else 0.0
        log.info("b_max=%g savings=%.4f (undiscounted %.4f)", s, sav, sav_u)
        points.append(SweepPoint(s, sav, sav_u, res.discounted_cost, base, result=res))
    top = max(p.savings for p in points)
    sat = None
    for p in points:
        p.saturated = _relative_close(p.savings, top, SATURATION_RTOL) if top > 0 else p.savings >= top
        if p.saturated and sat is None:
            sat = p.b_max
    return SweepResult(points, sat, baseline_purchases(ep, ed))


@dataclass
class PoolResult:
    n: int
    cost_none: float
    cost_individual: float
    cost_pooled: float
    cost_none_undiscounted: float
    cost_individual_undiscounted: float
    cost_pooled_undiscounted: float


def pool(train_demands: Sequence[Trace], eval_demands: Sequence[Trace], train_price: Trace,
         eval_price: Trace, b_max: float, alpha: float, template: Optional[BatteryParams] = None,
         battery_step: float = 0.5, price_step: float = 5.0, method: str = "policy",
         independent: bool = False) -> PoolResult:
    """Individual batteries of ``b_max`` each versus one shared battery of ``n * b_max``."""
    n = len(train_demands)
    if n < 1 or len(eval_demands) != n:
        raise ConfigurationError("need the same number (>= 1) of training and evaluation demand traces")
    template = template or BatteryParams(b_max=b_max)
    ep = eval_price.discretized(price_step)
    tr_d = [d.discretized(battery_step) for d in train_demands]
    ev_d = [d.discretized(battery_step) for d in eval_demands]

    none = none_u = ind = ind_u = 0.0
    for td, ed in zip(tr_d, ev_d):
        none += baseline(ep, ed, alpha)
        none_u += float(np.sum(ep.values * ed.values))
        tr = train(train_price, td, replace(template, b_max=b_max), alpha, battery_step,
                   price_step, method, independent=independent)
        res = replay(tr.mdp, tr.table, ep, ed)
        ind += res.discounted_cost
        ind_u += res.undiscounted_cost

    agg_train, agg_eval = aggregate(tr_d), aggregate(ev_d)
    tr = train(train_price, agg_train, replace(template, b_max=n * b_max), alpha, battery_step,
               price_step, method, independent=independent)
    res = replay(tr.mdp, tr.table, ep, agg_eval)
    return PoolResult(n, none, ind, res.discounted_cost, none_u, ind_u, res.undiscounted_cost)
