"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line; the lines are
printed in the "acceptance criteria" section of the pytest summary.  Run alone with::

    pytest tests/test_acceptance.py -v
"""

import math
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from battdp import sim, solver
from battdp import thresholds as th
from battdp.cli import main as cli_main
from battdp.mdp import build_iid, build_markov_prices
from battdp.model import BatteryParams
from battdp.scenarios import NIGHT_DAY

from conftest import ACCEPTANCE_LINES
from instances import instance_set, random_instance

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE_T = [[0.5, 0, 0.5, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0]]
EXAMPLE_BETA = [1.0, 0.0, 1.0, 0.0]


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def example_mdp(alpha):
    return build_markov_prices(EXAMPLE_T, [1, 2, 3, 4], 1.0, BatteryParams(1.0), alpha,
                               battery_step=1.0)


@pytest.fixture(scope="module")
def solved_set():
    """The randomized instance set of criteria 2-4 and 6a, solved by policy iteration."""
    solver.policy_iteration(example_mdp(0.9))  # compile kernels outside the timing
    t0 = time.perf_counter()
    out = []
    for m in instance_set(seed=20240601, count=60):
        s = solver.policy_iteration(m)
        out.append((m, s))
    return out, time.perf_counter() - t0


def test_criterion_1_example_thresholds():
    solver.policy_iteration(example_mdp(0.5))  # JIT warm-up, excluded from the runtime
    details, ok = [], True
    for alpha in (0.75, 0.9, 0.99):
        t0 = time.perf_counter()
        m = example_mdp(alpha)
        s = solver.policy_iteration(m)
        t = th.extract(m, s.policy)
        dt = time.perf_counter() - t0
        good = (t.beta_minus.tolist() == EXAMPLE_BETA and t.beta_plus.tolist() == EXAMPLE_BETA
                and dt < 1.0)
        ok &= good
        details.append(f"a={alpha}: b-={t.beta_minus.astype(int).tolist()} "
                       f"b+={t.beta_plus.astype(int).tolist()} {dt * 1e3:.0f}ms")
    report(1, ok, "; ".join(details))


def test_criterion_2_threshold_structure(solved_set):
    runs, elapsed = solved_set
    bad_cells = 0
    t0 = time.perf_counter()
    for m, s in runs:
        try:
            t = th.extract(m, s.policy)
        except th.StructureError as e:
            bad_cells += len(e.cells)
            continue
        bad_cells += int(np.count_nonzero(
            th.threshold_policy(m, t.beta_minus, t.beta_plus) != s.policy.index))
    elapsed += time.perf_counter() - t0
    inefficient = sum(not m.params.efficient for m, _ in runs)
    ok = len(runs) >= 50 and bad_cells == 0 and elapsed < 60
    report(2, ok, f"{len(runs)} instances ({inefficient} with eta<1), {bad_cells} violating "
                  f"cells, {elapsed:.1f}s")


def test_criterion_3_value_shape(solved_set):
    runs, _ = solved_set
    inc = conv = 0
    for m, s in runs:
        v = th.value_shape_violations(m, s.value, tol=1e-7 * m.p_max)
        inc += len(v["increasing"])
        conv += len(v["nonconvex"])
    report(3, inc == 0 and conv == 0,
           f"{len(runs)} instances: {inc} increasing cells, {conv} non-convex cells")


def test_criterion_4_single_threshold(solved_set):
    runs, _ = solved_set
    eff = [(m, s) for m, s in runs if m.params.efficient]
    diff = 0
    for m, s in eff:
        t = th.extract(m, s.policy)
        diff += int(np.count_nonzero(t.beta_minus != t.beta_plus))
    report(4, len(eff) > 0 and diff == 0,
           f"{len(eff)} instances with eta=1, {diff} states with beta- != beta+")


def test_criterion_5_oracle_equivalence():
    rng = np.random.default_rng(555)
    tol = 1e-6
    worst = []
    ok = True
    for _ in range(10):
        m = random_instance(rng)
        n = math.ceil(math.log(1e-8) / math.log(m.alpha))
        v = solver.value_iteration(m, tol=tol).value.values
        p = solver.policy_iteration(m).value.values
        o = solver.finite_horizon_oracle(m, n).values
        gap = solver.oracle_gap_bound(m, n)
        lin = 1e-9 * max(1.0, float(np.abs(p).max()))  # linear solve accuracy
        pairs = {
            "vi-pi": (np.abs(v - p).max(), tol / 2 + lin),
            "vi-or": (np.abs(v - o).max(), tol / 2 + gap + lin),
            "pi-or": (np.abs(p - o).max(), gap + lin),
        }
        ok &= all(d <= b for d, b in pairs.values())
        worst.append(max(d / b for d, b in pairs.values()))
    report(5, ok, f"10 instances, worst difference/bound ratio {max(worst):.3f}")


def test_criterion_6_propositions(solved_set):
    runs, _ = solved_set
    # (a) maximum-price states never charge
    a_bad = a_n = 0
    for m, s in runs:
        t = th.extract(m, s.policy)
        top = np.flatnonzero(m.prices == m.p_max)
        a_n += top.size
        a_bad += int(np.count_nonzero(t.beta_minus[top] != 0))
    # (b) strong discounting: all thresholds 0
    rng = np.random.default_rng(66)
    b_bad = b_n = 0
    while b_n < 20:
        m = random_instance(rng, efficient=True)
        if m.p_min / m.p_max < 0.05:
            continue
        alpha = float(rng.uniform(0.05, 0.95)) * m.p_min / m.p_max
        m = replace(m, alpha=alpha)
        t = th.extract(m, solver.policy_iteration(m).policy)
        b_bad += int(np.count_nonzero(t.beta_minus != 0) + np.count_nonzero(t.beta_plus != 0))
        b_n += 1
    # (c) i.i.d. thresholds non-increasing in price
    c_bad = 0
    for _ in range(25):
        m = random_instance(rng, kind="iid", efficient=True)
        t = th.extract(m, solver.policy_iteration(m).policy)
        c_bad += not th.check_monotonicity(m, t).ok
    ok = a_bad == 0 and b_bad == 0 and c_bad == 0
    report(6, ok, f"(a) {a_bad}/{a_n} max-price states charge; (b) {b_bad} nonzero thresholds "
                  f"in {b_n} low-discount instances; (c) {c_bad} counterexamples in 25 i.i.d. "
                  f"instances")


def test_criterion_7_closed_form():
    p, d, alpha = 10.0, 4.0, 0.95
    m = build_iid({p: 1.0}, {d: 1.0}, BatteryParams(4.0), alpha, battery_step=0.5)
    closed = d * p / (1 - alpha) - m.levels * p
    rec = solver.finite_horizon_oracle(m, 10_000).values[0]
    rec_err = float(np.max(np.abs(rec - closed) / np.abs(closed)))
    vi = solver.value_iteration(m, tol=1e-6).value.values[0]
    pi = solver.policy_iteration(m).value.values[0]
    err = max(float(np.max(np.abs(vi - closed) / np.abs(closed))),
              float(np.max(np.abs(pi - closed) / np.abs(closed))))
    report(7, rec_err <= 1e-5 and err <= 1e-5,
           f"recursion rel. error {rec_err:.1e}, solvers rel. error {err:.1e}")


@pytest.fixture(scope="module")
def sweep_result():
    tr = NIGHT_DAY.traces(1)
    t0 = time.perf_counter()
    res = sim.size_sweep(tr["train_price"], tr["train_demand"][0], tr["eval_price"],
                         tr["eval_demand"][0], NIGHT_DAY.sizes, NIGHT_DAY.alpha)
    return res, time.perf_counter() - t0


def test_criterion_8_experiment_properties(sweep_result):
    res, elapsed = sweep_result
    s = np.array([p.savings for p in res.points])
    a = bool(np.all(s >= 0))
    b = all(s[i + 1] >= s[i] - 0.005 * abs(s[i]) for i in range(len(s) - 1))
    c = abs(s[-1] - s[-2]) <= 1e-3 * max(abs(s[-1]), abs(s[-2]))
    cheap = NIGHT_DAY.cheap_hours()
    base = res.baseline_purchases
    base_share = base[cheap].sum() / base.sum()
    shares = [p.result.per_hour_purchases[cheap].sum() / p.result.per_hour_purchases.sum()
              for p in res.points if p.result is not None]
    d = all(sh > base_share for sh in shares)
    ok = a and b and c and d and elapsed < 600
    report(8, ok, f"savings {np.round(s, 4).tolist()}; (a) {a} (b) {b} (c) {c}; cheap-hour share "
                  f"{base_share:.3f} -> {min(shares):.3f}..{max(shares):.3f} (d) {d}; "
                  f"{elapsed:.1f}s")


def test_criterion_9_pooling():
    tr = NIGHT_DAY.traces(4)
    ok, parts = True, []
    for n in (1, 2, 4):
        r = sim.pool(tr["train_demand"][:n], tr["eval_demand"][:n], tr["train_price"],
                     tr["eval_price"], 16.0, NIGHT_DAY.alpha)
        rel = (r.cost_pooled - r.cost_individual) / r.cost_individual
        good = r.cost_pooled == r.cost_individual if n == 1 else abs(rel) <= 0.05
        ok &= good
        parts.append(f"n={n}: {rel:+.4%}")
    report(9, ok, "pooled vs individual " + ", ".join(parts))


def _run_cli(args, threads, tmp, subprocess_run=False):
    if subprocess_run:
        cmd = [sys.executable, "-m", "battdp.cli", *args, "--threads", str(threads),
               "--out-dir", str(tmp)]
        return subprocess.run(cmd, capture_output=True, text=True).returncode
    return cli_main([*args, "--threads", str(threads), "--out-dir", str(tmp)])


def test_criterion_10_determinism(tmp_path):
    jobs = [(["solve", str(ROOT / "configs" / "example1.json"), "--alpha", str(a)], f"ex{a}")
            for a in (0.75, 0.9, 0.99)]
    jobs.append((["sweep", str(ROOT / "configs" / "night_day.json")], "sweep"))
    compared, mismatched = 0, []
    for args, name in jobs:
        d1, d8 = tmp_path / f"{name}-t1", tmp_path / f"{name}-t8"
        assert _run_cli(args, 1, d1) == 0
        assert _run_cli(args, 8, d8, subprocess_run=True) == 0
        files = sorted(p.name for p in d1.iterdir())
        if files != sorted(p.name for p in d8.iterdir()):
            mismatched.append(f"{name}: file sets differ")
        for f in files:
            compared += 1
            if (d1 / f).read_bytes() != (d8 / f).read_bytes():
                mismatched.append(f"{name}/{f}")
    report(10, compared > 0 and not mismatched,
           f"{compared} artifacts compared across --threads 1/8, mismatches: {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
