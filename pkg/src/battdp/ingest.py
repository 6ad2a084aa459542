"""Price/demand traces: CSV I/O, hourly empirical distributions, synthetic data.

The synthetic generators are simple stand-ins for real market prices and a
household load model.  Prices follow a fixed daily shape (cheap at night,
several peaks between 9:00 and 22:00) with mean-preserving lognormal noise;
demand follows a two-peak (morning/evening) profile scaled by the number of
occupants.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mdp import HOURS, round_to_step

HEADERS = {"price": "price_ct_per_kwh", "demand": "demand_kwh"}
HOUR = np.timedelta64(60, "m")

# kWh per occupant per day of the canonical demand profile
DAILY_KWH_PER_OCCUPANT = 3.0

# relative weights of the one-occupant profile, hours 0..23
_DEMAND_SHAPE = np.array([
    0.30, 0.25, 0.25, 0.25, 0.25, 0.30, 0.60, 1.40, 1.60, 1.00, 0.70, 0.65,
    0.75, 0.70, 0.60, 0.60, 0.80, 1.20, 1.90, 2.10, 1.90, 1.50, 1.00, 0.55,
])


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class Trace:
    timestamps: np.ndarray  # datetime64[m], strictly increasing
    values: np.ndarray
    kind: str = "price"
    warnings: int = 0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[m]")
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if ts.shape != vals.shape:
            raise TraceError("timestamps and values differ in length")
        if ts.size > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "m")):
            raise TraceError("timestamps are not strictly increasing")
        if self.kind not in HEADERS:
            raise TraceError(f"unknown trace kind {self.kind!r}")

    def __len__(self):
        return self.values.size

    @property
    def hours(self) -> np.ndarray:
        """Hour of day of every record."""
        return ((self.timestamps - self.timestamps.astype("datetime64[D]")) // HOUR).astype(int)

    def discretized(self, step: float) -> "Trace":
        return replace(self, values=round_to_step(self.values, step))

    def window(self, start, days: int) -> "Trace":
        t0 = np.datetime64(start, "m")
        t1 = t0 + np.timedelta64(days, "D")
        sel = (self.timestamps >= t0) & (self.timestamps < t1)
        return replace(self, timestamps=self.timestamps[sel], values=self.values[sel])


def _parse_time(text: str, lineno: int) -> np.datetime64:
    try:
        dt = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise TraceError(f"line {lineno}: bad timestamp {text!r}") from exc
    if dt.tzinfo is not None:
        raise TraceError(f"line {lineno}: timestamps must be local civil time without offset")
    if dt.second or dt.microsecond:
        raise TraceError(f"line {lineno}: sub-minute timestamps are not supported")
    return np.datetime64(dt, "m")


def _read_csv(path, kind: str) -> tuple[np.ndarray, np.ndarray]:
    column = HEADERS[kind]
    times, vals = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", column]:
            raise TraceError(f"line 1: expected header 'timestamp,{column}', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise TraceError(f"line {lineno}: expected 2 fields, got {len(row)}")
            ts = _parse_time(row[0], lineno)
            try:
                v = float(row[1])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: bad number {row[1]!r}") from exc
            if not np.isfinite(v) or v < 0:
                raise TraceError(f"line {lineno}: value must be finite and >= 0, got {v}")
            if times and ts <= times[-1]:
                raise TraceError(f"line {lineno}: timestamp {row[0]} does not increase")
            times.append(ts)
            vals.append(v)
    if not times:
        raise TraceError(f"{path}: no data rows")
    return np.array(times, dtype="datetime64[m]"), np.array(vals)


def _fill_hourly(ts, vals, fill: str):
    if np.any(ts.astype("datetime64[h]") != ts):
        raise TraceError("price timestamps must fall on the hour")
    gaps = np.flatnonzero(np.diff(ts) != HOUR)
    if gaps.size == 0:
        return ts, vals
    if fill != "hold":
        raise TraceError(f"missing hours after {ts[gaps[0]]}; use fill='hold' to repeat the previous value")
    full = np.arange(ts[0], ts[-1] + HOUR, HOUR)
    pos = np.searchsorted(ts, full, side="right") - 1
    return full, vals[pos]


def _aggregate_hourly(ts, vals):
    if ts.size < 2:
        raise TraceError("demand trace needs at least one complete hour")
    res = np.unique(np.diff(ts))
    if res.size != 1:
        raise TraceError("demand samples are not at a fixed resolution")
    minutes = int(res[0] / np.timedelta64(1, "m"))
    if minutes > 60 or 60 % minutes:
        raise TraceError(f"demand resolution of {minutes} min does not divide an hour")
    per = 60 // minutes
    hours = ts.astype("datetime64[h]")
    uniq, start, counts = np.unique(hours, return_index=True, return_counts=True)
    if np.any(counts != per):
        bad = uniq[np.flatnonzero(counts != per)[0]]
        raise TraceError(f"incomplete hour {bad} in demand trace")
    if uniq.size > 1 and np.any(np.diff(uniq) != np.timedelta64(1, "h")):
        raise TraceError("missing hours in demand trace")
    sums = np.add.reduceat(vals, start)
    return uniq.astype("datetime64[m]"), sums


def load_trace(path, kind: str, step: Optional[float] = None,
               bounds: Optional[tuple[float, float]] = None, fill: str = "fail") -> Trace:
    """Read a price or demand CSV as an hourly trace rounded to ``step``.

    Values outside ``bounds`` are clamped and counted in ``warnings``.
    """
    if kind not in HEADERS:
        raise TraceError(f"unknown trace kind {kind!r}")
    ts, vals = _read_csv(path, kind)
    if kind == "price":
        ts, vals = _fill_hourly(ts, vals, fill)
    else:
        ts, vals = _aggregate_hourly(ts, vals)
    if step is not None:
        vals = round_to_step(vals, step)
    warnings = 0
    if bounds is not None:
        clipped = np.clip(vals, bounds[0], bounds[1])
        warnings = int(np.count_nonzero(clipped != vals))
        vals = clipped
    return Trace(ts, np.atleast_1d(vals), kind, warnings)


def write_trace(path, trace: Trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", HEADERS[trace.kind]])
        for t, v in zip(trace.timestamps, trace.values):
            w.writerow([str(t), repr(float(v))])


@dataclass
class HourlyEmpirical:
    """Per hour of day, the normalized histogram of (price, demand) cells."""

    hours: list
    counts: list = field(default_factory=list)

    def marginals(self, h: int) -> tuple[dict, dict]:
        pm, dm = Counter(), Counter()
        for (p, d), m in self.hours[h].items():
            pm[p] += m
            dm[d] += m
        return dict(pm), dict(dm)


def fit_hourly(price: Trace, demand: Trace, independent: bool = False) -> HourlyEmpirical:
    """Histogram the paired (price, demand) observations of each hour of day.

    With ``independent`` the joint histogram of each hour is replaced by the
    product of its price and demand marginals.
    """
    if len(price) != len(demand) or np.any(price.timestamps != demand.timestamps):
        raise TraceError("price and demand traces are not aligned on the same hours")
    hrs = price.hours
    hours, counts = [], []
    for h in range(HOURS):
        sel = hrs == h
        n = int(sel.sum())
        if n == 0:
            raise TraceError(f"no observations for hour {h}")
        c = Counter(zip(price.values[sel].tolist(), demand.values[sel].tolist()))
        counts.append(dict(c))
        if independent:
            pc, dc = Counter(price.values[sel].tolist()), Counter(demand.values[sel].tolist())
            dist = {(p, d): (pc[p] / n) * (dc[d] / n) for p in sorted(pc) for d in sorted(dc)}
        else:
            dist = {k: v / n for k, v in sorted(c.items())}
        hours.append(dist)
    return HourlyEmpirical(hours, counts)


# -- synthetic data --------------------------------------------------------------

def night_day_profile(night: float = 10.0, day: float = 24.0,
                      peaks: Optional[dict] = None) -> np.ndarray:
    """Daily price shape in ct/kWh: a cosine from ``night`` (03:00) to ``day`` (15:00) plus peaks."""
    h = np.arange(HOURS)
    base = (night + day) / 2 - (day - night) / 2 * np.cos(2 * np.pi * (h - 3) / HOURS)
    if peaks is None:
        peaks = {10: 5.0, 11: 7.0, 18: 8.0, 19: 9.0, 20: 5.0}
    for hour, extra in peaks.items():
        base[int(hour)] += extra
    return base


def _hourly_index(start, days: int) -> np.ndarray:
    t0 = np.datetime64(start, "m")
    return t0 + np.arange(days * HOURS) * HOUR


def _lognormal(rng, sigma: float, n: int) -> np.ndarray:
    if sigma == 0:
        return np.ones(n)
    return np.exp(sigma * rng.standard_normal(n) - sigma ** 2 / 2)


def synth_prices(profile: Optional[Sequence[float]] = None, sigma: float = 0.2, days: int = 31,
                 seed: int = 0, start: str = "2011-01-01T00:00") -> Trace:
    """Hourly prices: ``profile[hour]`` times mean-one lognormal noise."""
    if sigma < 0:
        raise TraceError("sigma must be >= 0")
    if days < 1:
        raise TraceError("days must be >= 1")
    prof = night_day_profile() if profile is None else np.asarray(profile, dtype=float)
    if prof.shape != (HOURS,):
        raise TraceError("price profile needs 24 hourly values")
    rng = np.random.default_rng(seed)
    n = days * HOURS
    vals = np.tile(prof, days) * _lognormal(rng, sigma, n)
    return Trace(_hourly_index(start, days), vals, "price")


def demand_profile(occupants: int = 1) -> np.ndarray:
    """Canonical noise-free hourly demand in kWh; sums to ``3.0 * occupants`` per day."""
    return occupants * DAILY_KWH_PER_OCCUPANT * _DEMAND_SHAPE / _DEMAND_SHAPE.sum()


def synth_demand(occupants: int = 1, days: int = 31, seed: int = 0, noise: float = 0.3,
                 start: str = "2011-01-01T00:00", step_minutes: int = 60) -> Trace:
    """Household demand: the canonical profile scaled by occupants, with lognormal noise.

    With ``step_minutes < 60`` each hour is split evenly into sub-hourly samples.
    """
    if occupants < 1:
        raise TraceError("occupants must be >= 1")
    if days < 1:
        raise TraceError("days must be >= 1")
    if step_minutes <= 0 or 60 % step_minutes:
        raise TraceError("step_minutes must divide 60")
    rng = np.random.default_rng(seed)
    n = days * HOURS
    hourly = np.tile(demand_profile(occupants), days) * _lognormal(rng, noise, n)
    if step_minutes == 60:
        return Trace(_hourly_index(start, days), hourly, "demand")
    per = 60 // step_minutes
    t0 = np.datetime64(start, "m")
    ts = t0 + np.arange(n * per) * np.timedelta64(step_minutes, "m")
    return Trace(ts, np.repeat(hourly / per, per), "demand")


def aggregate(traces: Sequence[Trace]) -> Trace:
    """Slot-wise sum of aligned traces (e.g. the demand of several homes)."""
    first = traces[0]
    for t in traces[1:]:
        if len(t) != len(first) or np.any(t.timestamps != first.timestamps):
            raise TraceError("traces are not aligned")
    return replace(first, values=np.sum([t.values for t in traces], axis=0), warnings=0)
