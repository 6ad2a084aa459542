"""Command-line front end.

Every run is described by one JSON config (validated, unknown keys
rejected); a few flags override single fields.  Artifacts are written to
``--out-dir`` only, with sorted keys and no timestamps, so the same config
and seed reproduce them byte for byte.

Exit codes: 0 success, 2 configuration or input error, 3 solver
non-convergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import _kernels, sim, solver
from .ingest import Trace, TraceError, fit_hourly, load_trace, write_trace
from .mdp import MdpError, build_hourly, build_iid, build_markov_prices
from .model import BatteryParams, ModelError, Replacement
from .scenarios import Scenario
from .thresholds import StructureError, ThresholdTable, extract, verify_solution

log = logging.getLogger("battdp")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
COMMANDS = ("solve", "simulate", "sweep", "pool", "verify", "synth")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_unit = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
_dist = {
    "type": "object",
    "additionalProperties": False,
    "required": ["levels", "probs"],
    "properties": {
        "levels": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    },
}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["alpha", "battery"],
    "properties": {
        "experiment": {"enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "battery": {
            "type": "object",
            "additionalProperties": False,
            "required": ["b_max"],
            "properties": {
                "b_max": _pos, "eta_c": _unit, "eta_d": _unit, "xi": _unit,
                "rate_charge": {"type": ["number", "null"], "minimum": 0},
                "rate_discharge": {"type": ["number", "null"], "minimum": 0},
                "replacement": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "required": ["q", "cost"],
                    "properties": {"q": {"type": "number", "minimum": 0, "maximum": 1},
                                   "cost": {"type": "number", "minimum": 0}},
                },
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "battery_step": _pos, "price_step": _pos,
                "price_bounds": _pair, "demand_bounds": _pair,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["value", "policy"]},
                "tol": _pos,
                "max_iters": {"type": "integer", "minimum": 1},
            },
        },
        "model": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "prices", "transition", "demand"],
                    "properties": {
                        "type": {"const": "markov_prices"},
                        "prices": {"type": "array", "items": {"type": "number", "minimum": 0},
                                   "minItems": 1},
                        "transition": {"type": "array", "items": {"type": "array", "items": _num}},
                        "demand": {"oneOf": [{"type": "number", "minimum": 0},
                                             {"type": "array", "items": _dist}]},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "prices", "demands"],
                    "properties": {"type": {"const": "iid"}, "prices": _dist, "demands": _dist},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type"],
                    "properties": {"type": {"const": "hourly"}},
                },
            ],
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fill": {"enum": ["fail", "hold"]},
                "independent": {"type": "boolean"},
                "files": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        k: {"type": "string"} for k in
                        ("train_price", "train_demand", "eval_price", "eval_demand")
                    } | {
                        "train_demands": {"type": "array", "items": {"type": "string"}},
                        "eval_demands": {"type": "array", "items": {"type": "string"}},
                    },
                },
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "night_price": {"type": "number", "minimum": 0},
                        "day_price": {"type": "number", "minimum": 0},
                        "price_sigma": {"type": "number", "minimum": 0},
                        "occupants": {"type": "integer", "minimum": 1},
                        "demand_noise": {"type": "number", "minimum": 0},
                        "train_start": {"type": "string"},
                        "train_days": {"type": "integer", "minimum": 1},
                        "eval_start": {"type": "string"},
                        "eval_days": {"type": "integer", "minimum": 1},
                        "users": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"b0": {"type": "number", "minimum": 0}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sizes": {"type": "array", "items": {"type": "number", "minimum": 0},
                                     "minItems": 1}},
        },
        "pool": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "users": {"type": "array", "items": {"type": "integer", "minimum": 1},
                          "minItems": 1},
                "b_max": _pos,
            },
        },
    },
}


class ConfigError(ValueError):
    pass


class ConstantRate:
    """Rate limit independent of the battery level."""

    def __init__(self, kwh: float):
        self.kwh = float(kwh)

    def __call__(self, b: float) -> float:
        return self.kwh

    def __eq__(self, other):
        return isinstance(other, ConstantRate) and other.kwh == self.kwh

    def __hash__(self):
        return hash(self.kwh)


# -- config --------------------------------------------------------------------

def load_config(path, overrides: dict | None = None) -> dict:
    """Read, override and validate a run config.  Raises :class:`ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {e.message}") from e
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def battery_params(cfg: dict, b_max: float | None = None) -> BatteryParams:
    b = cfg["battery"]
    repl = b.get("replacement")
    rc, rd = b.get("rate_charge"), b.get("rate_discharge")
    return BatteryParams(
        b_max=float(b["b_max"] if b_max is None else b_max),
        eta_c=float(b.get("eta_c", 1.0)),
        eta_d=float(b.get("eta_d", 1.0)),
        rate_charge=None if rc is None else ConstantRate(rc),
        rate_discharge=None if rd is None else ConstantRate(rd),
        xi=float(b.get("xi", 1.0)),
        replacement=None if repl is None else Replacement(repl["q"], repl["cost"]),
    )


def _steps(cfg: dict) -> tuple[float, float]:
    g = cfg.get("grids", {})
    return float(g.get("battery_step", 0.5)), float(g.get("price_step", 5.0))


def _solver_opts(cfg: dict) -> dict:
    s = cfg.get("solver", {})
    return {"method": s.get("method", "policy"), "tol": float(s.get("tol", 1e-6)),
            "max_iters": int(s.get("max_iters", 100_000))}


def _model_type(cfg: dict) -> str:
    if "model" in cfg:
        return cfg["model"]["type"]
    if "data" in cfg:
        return "hourly"
    raise ConfigError("config needs a 'model' or a 'data' section")


def _scenario(cfg: dict) -> Scenario:
    syn = dict(cfg["data"].get("synthetic", {}))
    syn.pop("users", None)
    return Scenario(seed=int(cfg.get("seed", 0)), alpha=float(cfg["alpha"]), **syn)


def _path(cfg: dict, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(cfg["_base"]) / p


def load_data(cfg: dict, users: int = 1) -> dict:
    """Training and evaluation traces from files or the synthetic generator."""
    data = cfg.get("data")
    if data is None:
        raise ConfigError("this command needs a 'data' section")
    if "files" in data and "synthetic" in data:
        raise ConfigError("data: give either 'files' or 'synthetic', not both")
    if "files" not in data:
        tr = _scenario(cfg).traces(users)
        return tr
    f = data["files"]
    fill = data.get("fill", "fail")
    g = cfg.get("grids", {})

    def read(key, kind):
        if key not in f:
            raise ConfigError(f"data.files.{key} is required for this command")
        bounds = g.get("price_bounds" if kind == "price" else "demand_bounds")
        return _load(cfg, f[key], kind, bounds, fill)

    out = {"train_price": read("train_price", "price"), "eval_price": read("eval_price", "price")}
    if users == 1 and "train_demand" in f:
        out["train_demand"] = [read("train_demand", "demand")]
        out["eval_demand"] = [read("eval_demand", "demand")]
    else:
        td, ed = f.get("train_demands", []), f.get("eval_demands", [])
        if len(td) < users or len(ed) < users:
            raise ConfigError(f"data.files needs {users} train_demands and eval_demands")
        out["train_demand"] = [_load(cfg, p, "demand", g.get("demand_bounds"), fill) for p in td[:users]]
        out["eval_demand"] = [_load(cfg, p, "demand", g.get("demand_bounds"), fill) for p in ed[:users]]
    return out


def _load(cfg, rel, kind, bounds, fill) -> Trace:
    t = load_trace(_path(cfg, rel), kind, bounds=None if bounds is None else tuple(bounds), fill=fill)
    if t.warnings:
        log.warning("%s: %d values clamped to %s", rel, t.warnings, bounds)
    return t


def build_model(cfg: dict, params: BatteryParams | None = None, traces: dict | None = None):
    """The Mdp described by ``cfg``; hourly models are fitted on the training traces."""
    params = params or battery_params(cfg)
    alpha = float(cfg["alpha"])
    bstep, pstep = _steps(cfg)
    kind = _model_type(cfg)
    m = cfg.get("model", {})
    if kind == "markov_prices":
        demand = m["demand"]
        if isinstance(demand, list):
            if len(demand) != len(m["prices"]):
                raise ConfigError("model.demand needs one distribution per price level")
            demand = {float(p): _dist(d, "demand") for p, d in zip(m["prices"], demand)}
        return build_markov_prices(m["transition"], m["prices"], demand, params, alpha, bstep)
    if kind == "iid":
        return build_iid(_dist(m["prices"], "price"), _dist(m["demands"], "demand"),
                         params, alpha, bstep)
    traces = traces or load_data(cfg)
    indep = bool(cfg["data"].get("independent", False))
    emp = fit_hourly(traces["train_price"].discretized(pstep),
                     traces["train_demand"][0].discretized(bstep), indep)
    return build_hourly(emp, params, alpha, bstep, pstep)


def _dist(d: dict, what: str) -> dict:
    if len(d["levels"]) != len(d["probs"]):
        raise ConfigError(f"{what} distribution: levels and probs differ in length")
    out = {}
    for k, v in zip(d["levels"], d["probs"]):
        out[float(k)] = out.get(float(k), 0.0) + float(v)
    return out


# -- artifact I/O ----------------------------------------------------------------

def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _states(mdp) -> list:
    return [{"mode": int(s.mode), "price": float(s.price), "demand": float(s.demand)}
            for s in mdp.states]


def _finite(a) -> list:
    return [[float(v) for v in row] for row in np.asarray(a)]


def save_solution(out: Path, mdp, sol, table) -> None:
    lv = [float(v) for v in mdp.levels]
    states = _states(mdp)
    write_json(out / "value_function.json", {
        "alpha": mdp.alpha, "levels": lv, "states": states,
        "values": _finite(sol.value.values), "residual": sol.value.residual,
        "iterations": sol.iterations,
    })
    write_json(out / "policy.json", {
        "levels": lv, "states": states, "target": _finite(sol.policy.target),
    })
    if table is not None:
        write_json(out / "thresholds.json", {"states": table.to_records()})


def _read_json(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read artifact: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"artifact {path} is not valid JSON: {e}") from e


def _check_states(mdp, doc: dict, name: str) -> None:
    if doc.get("states") != _states(mdp) and [
            {k: r[k] for k in ("mode", "price", "demand")} for r in doc.get("states", [])
    ] != _states(mdp):
        raise ConfigError(f"{name} does not match the states of the configured model")


def load_solution(art: Path, mdp) -> tuple[np.ndarray, solver.Policy]:
    vf = _read_json(art / "value_function.json")
    pol = _read_json(art / "policy.json")
    lv = [float(v) for v in mdp.levels]
    for name, doc in (("value_function.json", vf), ("policy.json", pol)):
        _check_states(mdp, doc, name)
        if doc.get("levels") != lv:
            raise ConfigError(f"{name} battery levels do not match the configured grid")
    J = np.array(vf["values"], dtype=float)
    target = np.array(pol["target"], dtype=float)
    if J.shape != (mdp.n_states, mdp.n_levels) or target.shape != J.shape:
        raise ConfigError("artifact arrays have the wrong shape")
    idx = np.rint(target / mdp.grids.battery_step).astype(np.int64)
    if np.any(np.abs(idx * mdp.grids.battery_step - target) > 1e-9) or idx.min() < 0 \
            or idx.max() >= mdp.n_levels:
        raise ConfigError("policy.json contains targets off the battery grid")
    return J, solver.Policy(idx, mdp.levels)


def load_thresholds(art: Path, mdp) -> ThresholdTable:
    doc = _read_json(art / "thresholds.json")
    _check_states(mdp, doc, "thresholds.json")
    recs = doc["states"]
    bm = np.array([r["beta_minus_kwh"] for r in recs], dtype=float)
    bp = np.array([r["beta_plus_kwh"] for r in recs], dtype=float)
    return ThresholdTable(bm, bp, list(mdp.states))


# -- commands --------------------------------------------------------------------

def _solve(mdp, opts):
    if opts["method"] == "policy":
        return solver.policy_iteration(mdp, max_iters=min(opts["max_iters"], 10_000))
    return solver.value_iteration(mdp, tol=opts["tol"], max_iters=opts["max_iters"])


def cmd_solve(cfg, args) -> int:
    out = _out(args)
    mdp = build_model(cfg)
    t0 = time.perf_counter()
    sol = _solve(mdp, _solver_opts(cfg))
    wall = time.perf_counter() - t0
    code = EXIT_OK
    table = None
    if mdp.params.structured:
        try:
            table = extract(mdp, sol.policy)
        except StructureError as e:
            log.error("%s", e)
            code = EXIT_VERIFY
    save_solution(out, mdp, sol, table)
    print(f"solve: {mdp.n_states} states x {mdp.n_levels} levels, "
          f"{sol.iterations} iterations, residual {sol.value.residual:.3e}, "
          f"wall {wall:.3f} s ({_kernels.BACKEND})")
    if table is not None:
        for r in table.to_records()[:24]:
            print(f"  mode {r['mode']:2d} price {r['price']:8.3f} demand {r['demand']:7.3f}: "
                  f"beta- {r['beta_minus_kwh']:g}  beta+ {r['beta_plus_kwh']:g}")
    return code


def cmd_verify(cfg, args) -> int:
    out = _out(args)
    mdp = build_model(cfg)
    J, pol = load_solution(Path(args.artifacts or args.out_dir), mdp)
    report = verify_solution(mdp, J, pol, tol=_solver_opts(cfg)["tol"])
    write_json(out / "verify_report.json", {"checks": report})
    failed = False
    for r in report:
        print(f"{r['check']:28s} {r['status']}  {r['detail']}")
        if r["status"] == "fail":
            failed = True
            for w in r["witnesses"][:5]:
                print(f"    witness: {w}")
    return EXIT_VERIFY if failed else EXIT_OK


def _b0(cfg) -> float:
    return float(cfg.get("simulate", {}).get("b0", 0.0))


def cmd_simulate(cfg, args) -> int:
    if _model_type(cfg) != "hourly":
        raise ConfigError("simulate needs trace data (an hourly model)")
    out = _out(args)
    bstep, pstep = _steps(cfg)
    traces = load_data(cfg)
    ep = traces["eval_price"].discretized(pstep)
    ed = traces["eval_demand"][0].discretized(bstep)
    if len(ep) == 0 or len(ed) == 0:
        raise ConfigError("evaluation trace has zero rows")
    mdp = build_model(cfg, traces=traces)
    if not mdp.params.structured:
        raise ConfigError("simulate replays threshold policies; not available with extensions")
    if args.artifacts:
        table = load_thresholds(Path(args.artifacts), mdp)
    else:
        sol = _solve(mdp, _solver_opts(cfg))
        table = extract(mdp, sol.policy)
    res = sim.replay(mdp, table, ep, ed, b0=_b0(cfg))
    base = sim.baseline(ep, ed, mdp.alpha)
    without = sim.baseline_purchases(ep, ed)
    write_csv(out / "purchases.csv", ["hour", "mean_kwh_with_storage", "mean_kwh_without"],
              [(h, float(res.per_hour_purchases[h]), float(without[h])) for h in range(24)])
    summary = res.to_dict(trajectory=args.trajectory)
    summary["baseline_discounted_cost"] = base
    summary["baseline_undiscounted_cost"] = float(np.sum(ep.values * ed.values))
    summary["relative_savings"] = 1 - res.discounted_cost / base if base > 0 else 0.0
    write_json(out / "run.json", summary)
    print(f"simulate: {len(ep)} slots, cost {res.discounted_cost:.4f} vs baseline {base:.4f}, "
          f"savings {summary['relative_savings']:.4%}, {res.unmatched} unmatched slots")
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    if _model_type(cfg) != "hourly":
        raise ConfigError("sweep needs trace data (an hourly model)")
    out = _out(args)
    bstep, pstep = _steps(cfg)
    traces = load_data(cfg)
    sizes = cfg.get("sweep", {}).get("sizes", [0, 2, 4, 8, 16, 32])
    opts = _solver_opts(cfg)
    res = sim.size_sweep(traces["train_price"], traces["train_demand"][0], traces["eval_price"],
                         traces["eval_demand"][0], sizes, float(cfg["alpha"]),
                         template=battery_params(cfg), battery_step=bstep, price_step=pstep,
                         method=opts["method"],
                         independent=bool(cfg["data"].get("independent", False)), b0=_b0(cfg))
    write_csv(out / "sweep.csv",
              ["b_max_kwh", "relative_savings", "saturation_flag", "relative_savings_undiscounted"],
              [(float(p.b_max), float(p.savings), int(p.saturated), float(p.savings_undiscounted))
               for p in res.points])
    header = ["hour", "mean_kwh_without"] + [f"mean_kwh_b{p.b_max:g}" for p in res.points]
    rows = []
    for h in range(24):
        row = [h, float(res.baseline_purchases[h])]
        for p in res.points:
            row.append(float(p.result.per_hour_purchases[h]) if p.result is not None
                       else float(res.baseline_purchases[h]))
        rows.append(row)
    write_csv(out / "sweep_purchases.csv", header, rows)
    for p in res.points:
        print(f"sweep: b_max {p.b_max:6g} kWh  savings {p.savings:8.4%}"
              f"{'  saturated' if p.saturated else ''}")
    return EXIT_OK


def cmd_pool(cfg, args) -> int:
    if _model_type(cfg) != "hourly":
        raise ConfigError("pool needs trace data (an hourly model)")
    out = _out(args)
    bstep, pstep = _steps(cfg)
    pc = cfg.get("pool", {})
    users = sorted(set(pc.get("users", [1, 2, 4])))
    b_max = float(pc.get("b_max", cfg["battery"]["b_max"]))
    traces = load_data(cfg, users=max(users))
    opts = _solver_opts(cfg)
    rows = []
    for n in users:
        r = sim.pool(traces["train_demand"][:n], traces["eval_demand"][:n], traces["train_price"],
                     traces["eval_price"], b_max, float(cfg["alpha"]),
                     template=battery_params(cfg, b_max), battery_step=bstep, price_step=pstep,
                     method=opts["method"], independent=bool(cfg["data"].get("independent", False)))
        rows.append((n, r.cost_none, r.cost_individual, r.cost_pooled, r.cost_none_undiscounted,
                     r.cost_individual_undiscounted, r.cost_pooled_undiscounted))
        print(f"pool: n={n} none {r.cost_none:.3f} individual {r.cost_individual:.3f} "
              f"pooled {r.cost_pooled:.3f}")
    write_csv(out / "pool.csv", ["n", "cost_none", "cost_individual", "cost_pooled",
                                 "cost_none_undiscounted", "cost_individual_undiscounted",
                                 "cost_pooled_undiscounted"], rows)
    return EXIT_OK


def cmd_synth(cfg, args) -> int:
    if "data" not in cfg or "synthetic" not in cfg["data"]:
        raise ConfigError("synth needs a data.synthetic section")
    out = _out(args)
    users = int(cfg["data"]["synthetic"].get("users", 1))
    tr = load_data(cfg, users=users)
    write_trace(out / "train_price.csv", tr["train_price"])
    write_trace(out / "eval_price.csv", tr["eval_price"])
    for u in range(users):
        write_trace(out / f"train_demand_{u}.csv", tr["train_demand"][u])
        write_trace(out / f"eval_demand_{u}.csv", tr["eval_demand"][u])
    print(f"synth: wrote traces for {users} user(s) to {out}")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "pool": cmd_pool, "verify": cmd_verify, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="battdp", description="Optimal home battery control by dynamic programming.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON run config")
        p.add_argument("--out-dir", default="battdp-out", help="directory for all artifacts")
        p.add_argument("--alpha", type=float)
        p.add_argument("--b-max", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--threads", type=int, help="cap on worker threads (results do not change)")
        p.add_argument("--fill", choices=["fail", "hold"], help="missing-hour rule for price files")
        p.add_argument("--independent", action="store_true", default=None,
                       help="factor each hour's distribution into price and demand marginals")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("simulate", "verify"):
            p.add_argument("--artifacts", help="directory with solved artifacts (default: --out-dir)"
                           if name == "verify" else "directory with thresholds.json")
        if name == "simulate":
            p.add_argument("--trajectory", action="store_true",
                           help="include the battery trajectory in run.json")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "artifacts"):
        args.artifacts = None
    if not hasattr(args, "trajectory"):
        args.trajectory = False
    overrides = {"alpha": args.alpha, "battery.b_max": args.b_max, "seed": args.seed,
                 "solver.tol": args.tol}
    try:
        cfg = load_config(args.config, overrides)
        if args.fill is not None or args.independent is not None:
            data = cfg.setdefault("data", {})
            if args.fill is not None:
                data["fill"] = args.fill
            if args.independent is not None:
                data["independent"] = True
        if cfg.get("experiment", args.command) != args.command:
            log.info("config is labelled '%s'; running '%s'", cfg["experiment"], args.command)
        _kernels.set_threads(args.threads)
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, ModelError, MdpError, TraceError, sim.ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except solver.NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except StructureError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
