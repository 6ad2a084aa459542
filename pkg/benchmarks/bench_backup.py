"""Compare the numba and numpy backends on the Bellman backup and a full solve.

Each backend runs in its own interpreter because the choice is made at
import time (``BATTDP_DISABLE_NUMBA``).  Usage::

    python benchmarks/bench_backup.py [--states 400] [--b-max 32] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from battdp import BatteryParams, build_iid, solver, BACKEND
from battdp.solver import bellman_backup

n_p, n_d, b_max, repeat = (float(a) for a in sys.argv[1:5])
rng = np.random.default_rng(0)
prices = {float(p): 1.0 / n_p for p in np.arange(1, int(n_p) + 1) * 2.5}
demands = {float(d): 1.0 / n_d for d in np.arange(int(n_d)) * 0.5}
mdp = build_iid(prices, demands, BatteryParams(b_max, eta_c=0.9, eta_d=0.95), 0.98)
J = rng.uniform(0, 100, (mdp.n_states, mdp.n_levels))

t = time.perf_counter(); bellman_backup(mdp, J); first = time.perf_counter() - t
times = []
for _ in range(int(repeat)):
    t = time.perf_counter(); vf, pol = bellman_backup(mdp, J); times.append(time.perf_counter() - t)
t = time.perf_counter(); sol = solver.policy_iteration(mdp); pi = time.perf_counter() - t
print(json.dumps({"backend": BACKEND, "states": mdp.n_states, "levels": mdp.n_levels,
                  "first_call_s": first, "backup_s": min(times), "policy_iteration_s": pi,
                  "checksum": float(vf.values.sum()), "policy_sum": int(pol.index.sum())}))
"""


def run(disable: bool, args) -> dict:
    env = dict(os.environ)
    if disable:
        env["BATTDP_DISABLE_NUMBA"] = "1"
    else:
        env.pop("BATTDP_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(args.prices), str(args.demands),
                          str(args.b_max), str(args.repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--prices", type=int, default=20)
    ap.add_argument("--demands", type=int, default=20)
    ap.add_argument("--b-max", type=float, default=32.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = [run(False, args), run(True, args)]
    print(f"{'backend':8s} {'states':>7s} {'levels':>7s} {'1st call':>9s} {'backup':>9s} {'PI':>9s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['states']:7d} {r['levels']:7d} {r['first_call_s']:9.3f} "
              f"{r['backup_s']:9.4f} {r['policy_iteration_s']:9.3f}")
    nb, np_ = rows
    print(f"backup speed-up: {np_['backup_s'] / nb['backup_s']:.1f}x")
    same = nb["policy_sum"] == np_["policy_sum"] and \
        abs(nb["checksum"] - np_["checksum"]) <= 1e-9 * abs(np_["checksum"])
    print(f"results agree: {same}")


if __name__ == "__main__":
    main()
