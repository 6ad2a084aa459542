"""Documented synthetic experiment: cheap nights, expensive days.

Prices follow :func:`battdp.ingest.night_day_profile` with a night level of
20 ct/kWh and a day level of 32 ct/kWh (plus the default peaks at 10-11 h
and 18-20 h) and 5 % lognormal noise.  Night prices stay close to their
mean, so buying energy more than one night ahead never pays at a discount
factor of 0.99 per hour.  Demand is the four-occupant canonical profile
(12 kWh/day) with 30 % noise.  Training covers January (31 days), evaluation
February (28 days) of a non-leap year.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import night_day_profile, synth_demand, synth_prices


@dataclass(frozen=True)
class Scenario:
    night_price: float = 20.0
    day_price: float = 32.0
    price_sigma: float = 0.05
    occupants: int = 4
    demand_noise: float = 0.3
    train_start: str = "2011-01-01T00:00"
    train_days: int = 31
    eval_start: str = "2011-02-01T00:00"
    eval_days: int = 28
    alpha: float = 0.99
    sizes: tuple = (0.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    seed: int = 2011

    @property
    def profile(self) -> np.ndarray:
        return night_day_profile(self.night_price, self.day_price)

    def _seeds(self, users: int):
        # one price stream per period and one demand stream per user and period
        root = np.random.SeedSequence(self.seed)
        price_train, price_eval, demand = root.spawn(3)
        return price_train, price_eval, demand.spawn(2 * users)

    def traces(self, users: int = 1) -> dict:
        """Raw (undiscretized) traces: ``train_price``, ``eval_price`` and per-user demand lists."""
        pt, pe, ds = self._seeds(users)
        out = {
            "train_price": synth_prices(self.profile, self.price_sigma, self.train_days,
                                        pt, self.train_start),
            "eval_price": synth_prices(self.profile, self.price_sigma, self.eval_days,
                                       pe, self.eval_start),
            "train_demand": [], "eval_demand": [],
        }
        for u in range(users):
            out["train_demand"].append(synth_demand(self.occupants, self.train_days, ds[2 * u],
                                                    self.demand_noise, self.train_start))
            out["eval_demand"].append(synth_demand(self.occupants, self.eval_days, ds[2 * u + 1],
                                                   self.demand_noise, self.eval_start))
        return out

    def cheap_hours(self, count: int = 8) -> np.ndarray:
        """The ``count`` hours of day with the lowest profile price."""
        return np.sort(np.argsort(self.profile, kind="stable")[:count])


NIGHT_DAY = Scenario()
