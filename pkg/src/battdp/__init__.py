"""Optimal control of a home battery under time-varying electricity prices.

The battery level is the controlled state; price, demand and hour of day
form an exogenous Markov state.  The optimal policy of the discounted cost
problem is found by value or policy iteration on a grid and has a
two-threshold form per exogenous state.
"""

from ._kernels import BACKEND, set_threads
from .mdp import Mdp, build_hourly, build_iid, build_markov_prices
from .model import Action, BatteryParams, ExogenousState, Replacement
from .solver import (NonConvergenceError, Policy, Solution, ValueFunction, finite_horizon_oracle,
                     policy_iteration, value_iteration)
from .thresholds import ThresholdTable, extract, verify_solution

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "set_threads", "Mdp", "build_hourly", "build_iid", "build_markov_prices",
    "Action", "BatteryParams", "ExogenousState", "Replacement", "NonConvergenceError",
    "Policy", "Solution", "ValueFunction", "finite_horizon_oracle", "policy_iteration",
    "value_iteration", "ThresholdTable", "extract", "verify_solution",
]
