"""Two-threshold structure of the optimal storage policy.

A policy has threshold form when, for every exogenous state, there are
levels ``beta_minus <= beta_plus`` such that the battery is charged up to
``beta_minus`` (as far as the control set allows) when below it,
discharged down to ``beta_plus`` when above it, and left alone otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .mdp import Mdp
from .solver import Policy, ValueFunction, _cost_args, bellman_backup, expected_next


class StructureError(ValueError):
    """Policy is not of threshold form."""

    def __init__(self, message: str, cells: list):
        super().__init__(f"{message}: {cells[:10]}" + (" ..." if len(cells) > 10 else ""))
        self.cells = cells


class ConsistencyError(ValueError):
    pass


class NotApplicable(ValueError):
    """A checker's preconditions do not hold for this model."""


@dataclass
class ThresholdTable:
    beta_minus: np.ndarray
    beta_plus: np.ndarray
    states: list
    # inclusive ranges of thresholds that reproduce the same policy
    minus_range: Optional[np.ndarray] = None
    plus_range: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.states)

    def to_records(self) -> list[dict]:
        return [
            {"mode": int(s.mode), "price": float(s.price), "demand": float(s.demand),
             "beta_minus_kwh": float(lo), "beta_plus_kwh": float(hi)}
            for s, lo, hi in zip(self.states, self.beta_minus, self.beta_plus)
        ]


@dataclass
class SubgradientProfile:
    sigma_minus: np.ndarray  # sigma_minus[0] is -inf (no left neighbour)
    sigma_plus: np.ndarray   # sigma_plus[-1] is 0 (no right neighbour)

    def violations(self, tol: float) -> list[str]:
        sm, sp_ = self.sigma_minus, self.sigma_plus
        out = []
        if np.any(sm > sp_ + tol):
            out.append("left slope exceeds right slope")
        if np.any(sp_ > tol):
            out.append("positive right slope")
        if np.any(np.diff(sm[1:]) < -tol) or np.any(np.diff(sp_) < -tol):
            out.append("slopes decrease")
        return out


@dataclass
class ThresholdIntervals:
    """Optimal threshold intervals from the subgradient conditions, per state."""

    minus_lo: np.ndarray
    minus_hi: np.ndarray
    plus_lo: np.ndarray
    plus_hi: np.ndarray
    table: ThresholdTable = field(repr=False)


def _require_structure(mdp: Mdp):
    if not mdp.params.structured:
        raise NotApplicable("threshold structure is not guaranteed with replacement cost or self-discharge")


def threshold_policy(mdp: Mdp, beta_minus, beta_plus) -> np.ndarray:
    """Grid-index policy of the three-branch rule with control-set clamps."""
    step = mdp.grids.battery_step
    lo, hi = mdp.control_bounds
    cm = np.rint(np.asarray(beta_minus) / step).astype(np.int64)[:, None]
    cp = np.rint(np.asarray(beta_plus) / step).astype(np.int64)[:, None]
    b = np.arange(mdp.n_levels)[None, :]
    return np.where(b <= cm, np.minimum(cm, hi), np.where(b >= cp, np.maximum(cp, lo), b))


def extract(mdp: Mdp, policy: Policy) -> ThresholdTable:
    """Recover per-state thresholds from a grid policy and verify the form.

    For each state, every grid level is tried as the charging and the
    discharging threshold; the candidates that reproduce the policy form
    ranges.  The reported pair is the smallest charging and the largest
    discharging threshold, i.e. the widest do-nothing band.
    """
    _require_structure(mdp)
    lo, hi = mdp.control_bounds
    t = np.asarray(policy.index)
    n_x, n_b = t.shape
    lv = mdp.levels
    b = np.arange(n_b)
    c = b[:, None]  # candidate threshold index, along axis 0
    below = b[None, :] <= c
    above = b[None, :] >= c

    bm = np.empty(n_x)
    bp = np.empty(n_x)
    mr = np.empty((n_x, 2))
    pr = np.empty((n_x, 2))
    bad = []
    for x in range(n_x):
        tx = t[x]
        charge_ok = np.where(below, tx[None, :] == np.minimum(c, hi[x][None, :]),
                             tx[None, :] <= b[None, :]).all(axis=1)
        discharge_ok = np.where(above, tx[None, :] == np.maximum(c, lo[x][None, :]),
                                tx[None, :] >= b[None, :]).all(axis=1)
        cm = np.flatnonzero(charge_ok)
        cp = np.flatnonzero(discharge_ok)
        if cm.size == 0 or cp.size == 0 or cm[0] > cp[-1]:
            bad.extend(_witness(mdp, x, tx, lo[x], hi[x]))
            continue
        bm[x], bp[x] = lv[cm[0]], lv[cp[-1]]
        mr[x] = lv[cm[0]], lv[cm[-1]]
        pr[x] = lv[cp[0]], lv[cp[-1]]
    if bad:
        raise StructureError("policy is not of threshold form", bad)
    return ThresholdTable(bm, bp, list(mdp.states), mr, pr)


def _witness(mdp, x, tx, lo, hi) -> list:
    """Cells of state x that disagree with the best-fitting threshold pair."""
    n_b = tx.size
    best, best_cells = None, None
    for cm in range(n_b):
        for cp in range(cm, n_b):
            pred = np.where(np.arange(n_b) <= cm, np.minimum(cm, hi),
                            np.where(np.arange(n_b) >= cp, np.maximum(cp, lo), np.arange(n_b)))
            miss = np.flatnonzero(pred != tx)
            if best is None or miss.size < best:
                best, best_cells = miss.size, miss
    lv = mdp.levels
    return [(x, float(lv[i])) for i in best_cells]


def subgradient_profile(mdp: Mdp, J, x: int, G: Optional[np.ndarray] = None) -> SubgradientProfile:
    """One-sided discrete slopes of the expected continuation value of state x."""
    _require_structure(mdp)
    if G is None:
        G = expected_next(mdp, J)
    g = G[x]
    step = mdp.grids.battery_step
    d = np.diff(g) / step
    sm = np.concatenate(([-np.inf], d))
    sp_ = np.concatenate((d, [0.0]))
    return SubgradientProfile(sm, sp_)


def subgradient_profiles(mdp: Mdp, J) -> list[SubgradientProfile]:
    G = expected_next(mdp, J)
    return [subgradient_profile(mdp, J, x, G) for x in range(mdp.n_states)]


def slope_tolerance(mdp: Mdp, J) -> float:
    """Slack on slope comparisons matching the solver's tie tolerance."""
    scale = float(np.max(np.abs(getattr(J, "values", J)))) if np.size(getattr(J, "values", J)) else 0.0
    return (1e-9 * max(scale, 1.0)) / mdp.grids.battery_step


def thresholds_from_subgradients(mdp: Mdp, profiles, eps: float = 0.0,
                                 check_order: bool = True) -> ThresholdIntervals:
    """Optimal threshold intervals ``[minus_lo, minus_hi]`` and ``[plus_lo, plus_hi]``."""
    _require_structure(mdp)
    p = mdp.params
    lv = mdp.levels
    a = mdp.alpha
    n = mdp.n_states
    m_lo, m_hi, p_lo, p_hi = (np.empty(n) for _ in range(4))
    for x, prof in enumerate(profiles):
        price = mdp.prices[x]
        up = price / p.eta_c
        down = p.eta_d * price
        with np.errstate(invalid="ignore"):
            b1m = up + a * prof.sigma_plus >= -eps
            b2m = up + a * prof.sigma_minus <= eps
            b1p = down + a * prof.sigma_plus >= -eps
            b2p = down + a * prof.sigma_minus <= eps
        m_lo[x] = lv[b1m].min() if b1m.any() else lv[-1]
        m_hi[x] = lv[b2m].max() if b2m.any() else lv[0]
        p_lo[x] = lv[b1p].min() if b1p.any() else lv[-1]
        p_hi[x] = lv[b2p].max() if b2p.any() else lv[0]

    if check_order:
        for x in range(n):
            chain = [m_lo[x], m_hi[x], p_lo[x], p_hi[x]]
            strict = p.eta_c * p.eta_d < 1 and mdp.prices[x] > 0
            ok = (m_lo[x] <= m_hi[x] and p_lo[x] <= p_hi[x]
                  and m_lo[x] <= p_lo[x] and m_hi[x] <= p_hi[x])
            if strict:
                ok = ok and m_hi[x] <= p_lo[x]
            elif p.efficient:
                ok = ok and m_lo[x] == p_lo[x] and m_hi[x] == p_hi[x]
            if not ok:
                raise ConsistencyError(f"threshold interval ordering violated in state {x}: {chain}")
    table = ThresholdTable(m_lo.copy(), p_hi.copy(), list(mdp.states))
    return ThresholdIntervals(m_lo, m_hi, p_lo, p_hi, table)


def containment_violations(table: ThresholdTable, iv: ThresholdIntervals) -> list[int]:
    """States whose extracted threshold ranges miss the optimal intervals."""
    mr = table.minus_range if table.minus_range is not None else np.c_[table.beta_minus, table.beta_minus]
    pr = table.plus_range if table.plus_range is not None else np.c_[table.beta_plus, table.beta_plus]
    miss_m = (mr[:, 1] < iv.minus_lo) | (mr[:, 0] > iv.minus_hi)
    miss_p = (pr[:, 1] < iv.plus_lo) | (pr[:, 0] > iv.plus_hi)
    return [int(i) for i in np.flatnonzero(miss_m | miss_p)]


def check_proposition_zero_threshold(mdp: Mdp, J, table: Optional[ThresholdTable] = None,
                                     tol: Optional[float] = None) -> list[dict]:
    """Certify thresholds 0 or ``b_max`` from slope bounds of the value function.

    A state is certified 0 when every secant of every successor's value
    function is no steeper than ``price / alpha``; certified ``b_max`` when
    every secant is at least that steep.  Only successors with positive
    transition probability are inspected.
    """
    if not mdp.params.efficient or not mdp.params.structured:
        raise NotApplicable("certificates assume a fully efficient battery without extensions")
    Jv = np.asarray(getattr(J, "values", J))
    lv = mdp.levels
    if tol is None:
        tol = slope_tolerance(mdp, Jv)
    i, j = np.triu_indices(lv.size, k=1)
    secant = (Jv[:, i] - Jv[:, j]) / (lv[j] - lv[i])  # (n_states, pairs), >= 0
    steep_max = secant.max(axis=1) if i.size else np.zeros(mdp.n_states)
    steep_min = secant.min(axis=1) if i.size else np.zeros(mdp.n_states)

    P = mdp.kernel.probs
    p_max, p_min = mdp.p_max, mdp.p_min
    reports, clashes = [], []
    for x in range(mdp.n_states):
        succ = P.indices[P.indptr[x]:P.indptr[x + 1]]
        bound = mdp.prices[x] / mdp.alpha
        zero = bool(steep_max[succ].max() <= bound + tol)
        full = bool(steep_min[succ].min() >= bound - tol)
        rep = {
            "state": x,
            "certified_zero": zero,
            "certified_full": full,
            "max_price": bool(mdp.prices[x] == p_max),
            "low_discount": bool(p_min > 0 and mdp.alpha < p_min / p_max),
        }
        if table is not None:
            if zero and table.beta_minus[x] != 0:
                clashes.append((x, "certified 0", float(table.beta_minus[x])))
            if full and table.beta_plus[x] != mdp.params.b_max:
                clashes.append((x, "certified b_max", float(table.beta_plus[x])))
        reports.append(rep)
    if clashes:
        raise ConsistencyError(f"certificates contradict extracted thresholds: {clashes[:10]}")
    return reports


@dataclass
class MonotonicityReport:
    ok: bool
    witness: Optional[tuple] = None


def check_monotonicity(mdp: Mdp, table: ThresholdTable) -> MonotonicityReport:
    """Thresholds must not increase with the price for i.i.d. models."""
    if mdp.kind != "iid":
        raise NotApplicable(
            "monotone thresholds are only guaranteed for i.i.d. prices and demands; "
            "Markov-modulated prices can give non-monotone thresholds")
    if not mdp.params.efficient:
        raise NotApplicable("monotonicity check assumes eta_c = eta_d = 1")
    pr = mdp.prices
    th = table.beta_minus
    for x in range(mdp.n_states):
        for y in range(mdp.n_states):
            if pr[x] < pr[y] and th[x] < th[y]:
                return MonotonicityReport(False, ((float(pr[x]), float(th[x])),
                                                  (float(pr[y]), float(th[y]))))
    return MonotonicityReport(True)


def value_shape_violations(mdp: Mdp, J, tol: Optional[float] = None) -> dict:
    """Cells where ``J[x]`` increases or loses discrete convexity beyond ``tol``.

    ``tol`` defaults to ``1e-7 * P_max``.
    """
    Jv = np.asarray(getattr(J, "values", J))
    if tol is None:
        tol = 1e-7 * mdp.p_max
    lv = mdp.levels
    d1 = np.diff(Jv, axis=1)
    d2 = np.diff(Jv, 2, axis=1)
    inc = np.argwhere(d1 > tol)
    conc = np.argwhere(d2 < -tol)
    return {
        "increasing": [(int(x), float(lv[b])) for x, b in inc],
        "nonconvex": [(int(x), float(lv[b + 1])) for x, b in conc],
    }


def _skip_reason(mdp: Mdp) -> Optional[str]:
    p = mdp.params
    if p.replacement is not None:
        return "skipped (non-convex immediate cost)"
    if p.xi != 1.0:
        return "skipped (self-discharge)"
    return None


def _near_optimal(mdp: Mdp, J, policy: Policy, tol: float) -> list:
    best, _ = bellman_backup(mdp, J)
    arg = np.ascontiguousarray(policy.index, dtype=np.int64)
    H = K.policy_costs(arg, *_cost_args(mdp))
    H = H + mdp.alpha * np.take_along_axis(expected_next(mdp, J), arg, axis=1)
    gap = H - best.values
    lim = tol + K.TIE_RTOL * np.abs(best.values) + K.TIE_ATOL
    return [(int(x), float(mdp.levels[b])) for x, b in np.argwhere(gap > lim)]


def verify_solution(mdp: Mdp, J, policy: Policy, tol: float = 1e-6) -> list[dict]:
    """Run every applicable checker; one dict per check with status pass/fail/skipped.

    ``tol`` is the solver tolerance; it bounds the Bellman residual and the
    suboptimality accepted for the stored policy.
    """
    Jv = np.asarray(getattr(J, "values", J), dtype=float)
    out = []

    def add(name, ok, detail="", witnesses=()):
        status = ok if isinstance(ok, str) else ("pass" if ok else "fail")
        out.append({"check": name, "status": status, "detail": detail,
                    "witnesses": [list(w) if isinstance(w, tuple) else w for w in witnesses][:20]})

    # policy-independent facts about J
    resid = float(np.max(np.abs(bellman_backup(mdp, Jv)[0].values - Jv)))
    add("bellman_residual", resid <= tol, f"sup |TJ - J| = {resid:.3e} (limit {tol:g})")
    bad = _near_optimal(mdp, Jv, policy, 2 * tol)
    add("policy_optimality", not bad, f"{len(bad)} cells beaten by another target", bad)

    skip = _skip_reason(mdp)
    names = ["threshold_structure", "value_monotone", "value_convex", "single_threshold",
             "subgradient_containment", "zero_threshold_certificates", "max_price_threshold",
             "low_discount_threshold", "monotone_in_price"]
    if skip:
        for n in names:
            add(n, skip)
        return out

    table = None
    try:
        table = extract(mdp, policy)
        add("threshold_structure", True, f"{len(table)} states of threshold form")
    except StructureError as e:
        add("threshold_structure", False, "policy is not of threshold form", e.cells)

    shape = value_shape_violations(mdp, Jv)
    add("value_monotone", not shape["increasing"], "J non-increasing in b", shape["increasing"])
    add("value_convex", not shape["nonconvex"], "J discretely convex in b", shape["nonconvex"])

    iv = None
    try:
        iv = thresholds_from_subgradients(mdp, subgradient_profiles(mdp, Jv),
                                          eps=slope_tolerance(mdp, Jv))
    except ConsistencyError as e:
        add("subgradient_containment", False, str(e))
    if iv is not None:
        if table is None:
            add("subgradient_containment", "skipped (no threshold table)")
        else:
            miss = containment_violations(table, iv)
            add("subgradient_containment", not miss,
                "extracted thresholds inside the subgradient intervals", miss)

    if not mdp.params.efficient:
        for n in ("single_threshold", "zero_threshold_certificates", "max_price_threshold",
                  "low_discount_threshold", "monotone_in_price"):
            add(n, "skipped (requires eta_c = eta_d = 1)")
        return out
    if table is None:
        for n in ("single_threshold", "zero_threshold_certificates", "max_price_threshold",
                  "low_discount_threshold", "monotone_in_price"):
            add(n, "skipped (no threshold table)")
        return out

    # with ties the do-nothing rule leaves a band; it must be flat-optimal
    split = np.flatnonzero(table.beta_minus != table.beta_plus)
    if iv is not None:
        unexplained = [int(x) for x in split
                       if not (iv.minus_lo[x] <= table.beta_minus[x]
                               and table.beta_plus[x] <= iv.minus_hi[x])]
    else:
        unexplained = [int(x) for x in split]
    detail = "beta_minus == beta_plus" if split.size == 0 else \
        f"{split.size} states with a tied do-nothing band"
    add("single_threshold", not unexplained, detail, unexplained)

    try:
        check_proposition_zero_threshold(mdp, Jv, table)
        add("zero_threshold_certificates", True, "slope certificates agree with thresholds")
    except ConsistencyError as e:
        add("zero_threshold_certificates", False, str(e))

    top = np.flatnonzero(mdp.prices == mdp.p_max)
    bad = [int(x) for x in top if table.beta_minus[x] != 0]
    add("max_price_threshold", not bad, f"{top.size} states at the maximum price", bad)

    if mdp.p_min > 0 and mdp.alpha < mdp.p_min / mdp.p_max:
        bad = [int(x) for x in np.flatnonzero(table.beta_minus != 0)]
        add("low_discount_threshold", not bad, "alpha < p_min / p_max", bad)
    else:
        add("low_discount_threshold", "skipped (alpha >= p_min / p_max)")

    try:
        rep = check_monotonicity(mdp, table)
        add("monotone_in_price", rep.ok, "thresholds non-increasing in price",
            [rep.witness] if rep.witness else [])
    except NotApplicable as e:
        add("monotone_in_price", f"skipped ({e})")
    return out
