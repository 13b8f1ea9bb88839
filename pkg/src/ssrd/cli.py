"""Command-line surface: enumeration benchmarks, sequence evaluation, myopic
baselines, sensitivity sweeps, case studies, data exports and the bridge
server.

Exit codes: 0 success, 2 usage error, 3 data error, 4 infeasible problem.
Primary outputs (stdout and --out files) are byte-stable for a fixed seed;
timing information goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
import time

import numpy as np

from . import datasets
from .bridge import serve_stdio, serve_tcp
from .demand import simulate_paths, InvestmentSchedule
from .errors import DataError, InfeasibleError, InvalidActionError
from .metrics import (
    CongestionParams, DeploymentSchedule, congestion_transform, expected_npv,
    profitability,
)
from .scenario import Scenario, load_scenario, travel_time_matrix
from .sequences import (
    count_feasible, enumerate_feasible, format_sequence, is_feasible,
    myopia_sequence, parse_sequence,
)
from .valuation import RoaEvaluator, roa_evaluate


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path, header, rows):
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()


def _load_config(path) -> dict:
    """Config file: 'section.key = value' lines for scenario/spillover/costs."""
    overrides: dict[str, dict[str, str]] = {"scenario": {}, "spillover": {}, "costs": {}}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"config line must be 'section.key = value': {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if "." not in key:
                key = "scenario." + key
            section, _, field = key.partition(".")
            if section not in overrides:
                raise DataError(f"unknown config section {section!r}")
            overrides[section][field] = value.strip()
    return overrides


_SCENARIO_CASTS = {
    "horizon": int, "k": int, "rho": float, "n_paths": int, "n_basis": int,
    "seed": int, "name": str,
}


def _build_scenario(args) -> Scenario:
    if not getattr(args, "scenario", None):
        raise DataError("this command needs --scenario <name or file>")
    overrides = {}
    config = _load_config(args.config) if getattr(args, "config", None) else None
    if config:
        for key, value in config["scenario"].items():
            cast = _SCENARIO_CASTS.get(key)
            if cast is None:
                raise DataError(f"unknown scenario config key {key!r}")
            overrides[key] = cast(value)
    for key in ("k", "horizon"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "n_paths", None) is not None:
        overrides["n_paths"] = args.n_paths
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    scenario = datasets.resolve_scenario(args.scenario, **overrides)
    if config:
        if config["spillover"]:
            from .scenario import SpilloverSpec, _parse_bool, _parse_pair
            kw = {}
            sp = config["spillover"]
            if "distribution" in sp:
                kw["distribution"] = sp["distribution"].lower()
            if "strength" in sp:
                kw["strength"] = float(sp["strength"])
            if "stationary" in sp:
                kw["stationary"] = _parse_bool(sp["stationary"])
            for key in ("shape_range", "scale_range"):
                if key in sp:
                    kw[key] = _parse_pair(sp[key], key)
            scenario = dataclasses.replace(
                scenario, spillover=dataclasses.replace(scenario.spillover, **kw))
        if config["costs"]:
            kw = {key: float(val) for key, val in config["costs"].items()}
            scenario = dataclasses.replace(
                scenario, costs=dataclasses.replace(scenario.costs, **kw))
    return scenario


def _resolve_policy(token: str, scenario: Scenario):
    """Policy token -> (label, sequence)."""
    if token == "myopia-h":
        return token, myopia_sequence(scenario, "high")
    if token == "myopia-l":
        return token, myopia_sequence(scenario, "low")
    if token.startswith("seq:"):
        return token, parse_sequence(token[4:])
    if token.startswith("file:"):
        path = token[5:]
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read().strip()
        except OSError as exc:
            raise DataError(f"cannot read sequence file {path}: {exc}") from exc
        return f"file:{os.path.basename(path)}", parse_sequence(text)
    raise DataError(f"unknown policy {token!r} "
                    "(use myopia-h, myopia-l, seq:[[...]] or file:PATH)")


def _check_feasible(seq, scenario: Scenario):
    if not is_feasible(seq, scenario.n_regions, scenario.k, scenario.horizon):
        raise InfeasibleError(
            f"sequence {format_sequence(seq)} is not feasible for "
            f"N={scenario.n_regions}, k={scenario.k}, T={scenario.horizon}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_count(args) -> int:
    n, k, t = _nkt(args)
    count = count_feasible(n, k, t)
    if count == 0:
        print(f"warning: no feasible sequence for N={n}, k={k}, T={t}", file=sys.stderr)
    print(count)
    return 0


def _nkt(args):
    if args.scenario:
        scenario = _build_scenario(args)
        return scenario.n_regions, scenario.k, scenario.horizon
    if args.N is None or args.k is None or args.T is None:
        raise DataError("give either --scenario or all of -N, -k, -T")
    return args.N, args.k, args.T


def cmd_enumerate(args) -> int:
    if args.evaluate:
        return _enumerate_evaluate(args)
    n, k, t = _nkt(args)
    count = 0
    for seq in enumerate_feasible(n, k, t):
        print(format_sequence(seq))
        count += 1
    if count == 0:
        print(f"warning: no feasible sequence for N={n}, k={k}, T={t}", file=sys.stderr)
    return 0


def _enumerate_evaluate(args) -> int:
    scenario = _build_scenario(args)
    n, k, t = scenario.n_regions, scenario.k, scenario.horizon
    seed = scenario.seed
    evaluator = RoaEvaluator(scenario)
    start = time.perf_counter()
    sequences = list(enumerate_feasible(n, k, t))
    if not sequences:
        print(f"warning: no feasible sequence for N={n}, k={k}, T={t}", file=sys.stderr)
        return 0

    def value_one(seq):
        return evaluator.evaluate(seq, seed=seed).option_value

    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        evaluator.paths_for(sequences[0], seed)  # warm the common-path cache
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            values = list(pool.map(value_one, sequences))
    else:
        values = [value_one(seq) for seq in sequences]
    elapsed = time.perf_counter() - start

    best_idx = max(range(len(values)), key=lambda i: (values[i], -i))
    rows = [(format_sequence(seq), val) for seq, val in zip(sequences, values)]
    _write_csv(args.out, ["sequence", "option_value"], rows)
    print(f"seed = {seed}")
    print(f"sequences = {len(sequences)}")
    print(f"best_sequence = {format_sequence(sequences[best_idx])}")
    print(f"best_option_value = {_fmt(values[best_idx])}")
    print(f"runtime_s = {elapsed:.2f}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    scenario = _build_scenario(args)
    seq = parse_sequence(args.sequence)
    _check_feasible(seq, scenario)
    seed = scenario.seed
    result = roa_evaluate(scenario, seq, seed=seed,
                          diagnostics=args.diagnostics is not None)
    if args.dump_paths:
        paths = RoaEvaluator(scenario).paths_for(seq, seed)
        _dump_paths(paths.values, args.dump_paths)
    print(f"scenario = {scenario.name}")
    print(f"sequence = {format_sequence(seq)}")
    print(f"seed = {seed}")
    print(f"option_value = {_fmt(result.option_value)}")
    print("mean_stop_times = " + ",".join(_fmt(float(v)) for v in result.mean_stop_times))
    if args.diagnostics is not None:
        rows = []
        surface = result.value_surface
        for h in range(len(seq)):
            for t in range(scenario.horizon + 1):
                mean_v = surface["mean_value"][h, t]
                frac = surface["exercise_frac"][h, t]
                rows.append((h, t,
                             "" if math.isnan(mean_v) else mean_v,
                             "" if math.isnan(frac) else frac))
        _write_csv(args.diagnostics, ["portfolio", "t", "mean_value", "exercise_frac"], rows)
    return 0


def _dump_paths(values: np.ndarray, path: str):
    if path.endswith(".npy"):
        np.save(path, values)
        return
    rows = []
    n_paths, steps, n, _ = values.shape
    for w in range(n_paths):
        for t in range(steps):
            for i in range(n):
                for j in range(n):
                    rows.append((w, t, i, j, values[w, t, i, j]))
    _write_csv(path, ["path", "t", "origin", "destination", "demand"], rows)


def cmd_myopia(args) -> int:
    scenario = _build_scenario(args)
    seq = myopia_sequence(scenario, args.mode)
    _check_feasible(seq, scenario)
    print(format_sequence(seq))
    return 0


def _scenario_variant(base_args, scenario: Scenario, axis: str, value):
    """Scenario for one grid point of a sweep axis."""
    if axis == "k":
        return dataclasses.replace(scenario, k=int(value))
    if axis == "spillover":
        return dataclasses.replace(
            scenario, spillover=scenario.spillover.with_strength(float(value)))
    if axis == "f_end":
        return dataclasses.replace(
            scenario, costs=dataclasses.replace(scenario.costs, f_end=float(value)))
    if axis == "zeta":
        return dataclasses.replace(
            scenario, costs=dataclasses.replace(scenario.costs, zeta=float(value)))
    if axis == "mu_sigma":
        token = str(value).lower()
        levels = {"l": 0.5, "m": 1.0, "h": 1.5}
        if len(token) != 2 or token[0] not in levels or token[1] not in levels:
            raise DataError(f"mu_sigma grid points look like ll/lm/../hh, got {value!r}")
        calib = scenario.calib
        new_calib = dataclasses.replace(
            calib, mu=calib.mu * levels[token[0]], sigma=calib.sigma * levels[token[1]])
        return dataclasses.replace(scenario, calib=new_calib)
    raise DataError(f"unknown sweep axis {axis!r}")


def cmd_sweep(args) -> int:
    scenario = _build_scenario(args)
    grid = [g for g in args.grid.split(",") if g]
    if not grid:
        raise DataError("empty grid")
    policies = [p for p in args.policies.split(",") if p]
    if not policies:
        raise DataError("no policies given")
    seeds = [scenario.seed + i for i in range(args.seeds)]
    os.makedirs(args.out, exist_ok=True)

    sweep_rows = []
    invest_rows = []
    co_counts: dict[str, np.ndarray] = {}
    n = scenario.n_regions
    for grid_value in grid:
        variant = _scenario_variant(args, scenario, args.axis, grid_value)
        evaluator = RoaEvaluator(variant)
        for token in policies:
            label, seq = _resolve_policy(token, variant)
            _check_feasible(seq, variant)
            values = []
            region_times = np.zeros(n)
            co = co_counts.setdefault(label, np.zeros((n, n)))
            for seed in seeds:
                result = evaluator.evaluate(seq, seed=seed)
                values.append(result.option_value)
                region_times += np.nan_to_num(
                    result.region_stop_times(n).mean(axis=0))
                for portfolio in seq:
                    for a in portfolio:
                        for b in portfolio:
                            if a != b:
                                co[a, b] += 1
            values = np.array(values)
            se = values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else 0.0
            sweep_rows.append((args.axis, grid_value, label,
                               values.mean(), se, len(values)))
            for region in range(n):
                invest_rows.append((args.axis, grid_value, label, region,
                                    region_times[region] / len(seeds)))
    _write_csv(os.path.join(args.out, "sweep.csv"),
               ["axis", "value", "policy", "mean_option_value", "mc_se", "n_seeds"],
               sweep_rows)
    _write_csv(os.path.join(args.out, "invest_times.csv"),
               ["axis", "value", "policy", "region", "mean_invest_time"],
               invest_rows)
    co_rows = []
    for label in sorted(co_counts):
        for i in range(n):
            for j in range(n):
                co_rows.append((label, i, j, co_counts[label][i, j]))
    _write_csv(os.path.join(args.out, "co_invest.csv"),
               ["policy", "region_i", "region_j", "count"], co_rows)
    print(f"wrote {args.out}/sweep.csv, invest_times.csv, co_invest.csv",
          file=sys.stderr)
    return 0


def _metrics_for(scenario: Scenario, label: str, seq_or_none, seed: int,
                 congestion: CongestionParams | None, evaluator: RoaEvaluator):
    """One metrics row: (label, option_value or '', E[NPV], profitability,
    zero-demand terms, congestion failures)."""
    if seq_or_none is None:  # all-in deployment
        schedule = DeploymentSchedule.all_in(scenario.n_regions)
        paths = simulate_paths(
            scenario,
            InvestmentSchedule(np.zeros(scenario.n_regions, dtype=np.int64),
                               scenario.horizon),
            seed=seed)
        option_value = ""
    else:
        result = evaluator.evaluate(seq_or_none, seed=seed)
        schedule = DeploymentSchedule.from_roa(result)
        paths = evaluator.paths_for(seq_or_none, seed)
        option_value = result.option_value
    failures = 0
    if congestion is not None:
        tt = travel_time_matrix(scenario.regions, speed=congestion.speed,
                                peak_multiplier=datasets.NYC_PEAK_MULTIPLIER)
        paths, failures = congestion_transform(paths, tt, congestion)
    npv = expected_npv(paths, schedule, scenario.costs, scenario.rho)
    prof = profitability(paths, schedule, scenario.costs, scenario.rho)
    return (label, option_value, npv, prof.value,
            prof.zero_denominator_terms, failures)


def cmd_metrics(args) -> int:
    scenario = _build_scenario(args)
    congestion = CongestionParams() if args.congestion else None
    evaluator = RoaEvaluator(scenario)
    rows = []
    for token in args.policies.split(","):
        if token == "all-in":
            label, seq = "all-in", None
        else:
            label, seq = _resolve_policy(token, scenario)
            _check_feasible(seq, scenario)
        rows.append(_metrics_for(scenario, label, seq, scenario.seed,
                                 congestion, evaluator))
    _write_csv(args.out,
               ["policy", "option_value", "e_npv", "profitability",
                "zero_demand_terms", "congestion_failures"], rows)
    return 0


def cmd_casestudy(args) -> int:
    city = args.city
    scenario = datasets.build_named_scenario(
        city, k=args.k if args.k else 3,
        n_paths=args.n_paths if args.n_paths else 300,
        seed=args.seed if args.seed is not None else datasets.DEFAULT_SEED)
    congestion = CongestionParams() if city.startswith("nyc") else None
    seeds = [scenario.seed + i for i in range(args.seeds)]
    os.makedirs(args.out, exist_ok=True)

    # unconstrained setting: no jumps, all-in vs staged baselines
    unconstrained = dataclasses.replace(
        scenario,
        calib=dataclasses.replace(scenario.calib,
                                  lam=np.zeros(scenario.n_regions)),
        name=scenario.name + "-nospill")
    rows = []
    for setting, scen in (("unconstrained", unconstrained), ("full", scenario)):
        evaluator = RoaEvaluator(scen)
        policies: list[tuple[str, tuple | None]] = [("all-in", None)]
        for mode in ("low", "high"):
            policies.append((f"myopia-{mode[0]}", myopia_sequence(scen, mode)))
        if args.sequence:
            policies.append(("sequence", parse_sequence(args.sequence)))
        for label, seq in policies:
            if seq is not None:
                _check_feasible(seq, scen)
            per_seed = [
                _metrics_for(scen, label, seq, seed, congestion, evaluator)
                for seed in seeds
            ]
            npv = float(np.mean([r[2] for r in per_seed]))
            prof = float(np.mean([r[3] for r in per_seed]))
            opt_vals = [r[1] for r in per_seed if r[1] != ""]
            opt = float(np.mean(opt_vals)) if opt_vals else ""
            rows.append((setting, label, opt, npv, prof, len(seeds)))
    out_file = os.path.join(args.out, f"casestudy_{scenario.name}.csv")
    _write_csv(out_file,
               ["setting", "policy", "mean_option_value", "mean_e_npv",
                "mean_profitability", "n_seeds"], rows)
    print(f"wrote {out_file}", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    scenario = _build_scenario(args)
    evaluator = RoaEvaluator(scenario)
    seeds = [scenario.seed + i for i in range(args.seeds)]
    os.makedirs(args.out, exist_ok=True)
    n = scenario.n_regions
    invest_rows = []
    co = np.zeros((n, n))
    for token in args.policies.split(","):
        label, seq = _resolve_policy(token, scenario)
        _check_feasible(seq, scenario)
        region_times = np.zeros(n)
        for seed in seeds:
            result = evaluator.evaluate(seq, seed=seed)
            region_times += np.nan_to_num(result.region_stop_times(n).mean(axis=0))
            for portfolio in seq:
                for a in portfolio:
                    for b in portfolio:
                        if a != b:
                            co[a, b] += 1
        for region in range(n):
            invest_rows.append((label, region, region_times[region] / len(seeds)))
    _write_csv(os.path.join(args.out, "invest_times.csv"),
               ["policy", "region", "mean_invest_time"], invest_rows)
    co_rows = [(i, j, co[i, j]) for i in range(n) for j in range(n)]
    _write_csv(os.path.join(args.out, "co_invest.csv"),
               ["region_i", "region_j", "count"], co_rows)
    if args.dump_paths:
        seq = myopia_sequence(scenario, "low")
        paths = evaluator.paths_for(seq, scenario.seed)
        _dump_paths(paths.values, args.dump_paths)
    print(f"wrote {args.out}/invest_times.csv, co_invest.csv",
          file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    if args.scenarios_dir:
        registry = {}
        for fname in sorted(os.listdir(args.scenarios_dir)):
            if fname.endswith((".scn", ".scenario", ".txt")):
                scenario = load_scenario(os.path.join(args.scenarios_dir, fname))
                registry[scenario.name] = scenario
        if not registry:
            raise DataError(f"no scenario files found in {args.scenarios_dir}")
    else:
        registry = datasets.default_registry(
            n_paths=args.n_paths if args.n_paths else 300)
    if args.stdio:
        serve_stdio(registry)
        return 0
    host, _, port = args.listen.rpartition(":")
    if not host:
        host = "127.0.0.1"
    server = serve_tcp(host, int(port), registry)
    print(f"listening on {host}:{port} ({len(registry)} scenarios)", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_scenario_opts(p, with_nkt=False):
    p.add_argument("--scenario", help="bundled name (shanghai4..8, beijing4..9, "
                                      "nyc7, nyc8) or scenario file path")
    p.add_argument("--config", help="override file: section.key = value lines")
    p.add_argument("--seed", type=int, help="RNG seed (printed with outputs)")
    p.add_argument("--n-paths", type=int, dest="n_paths", help="Monte Carlo paths")
    if with_nkt:
        p.add_argument("-N", type=int, help="region count (without --scenario)")
        p.add_argument("-k", type=int, help="max regions per portfolio")
        p.add_argument("-T", type=int, help="planning horizon (periods)")
    else:
        p.add_argument("--k", type=int, help="override portfolio capacity k")
        p.add_argument("--horizon", type=int, help="override horizon T")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrd",
        description="Sequential service-region design: simulate, value, "
                    "enumerate, sweep and serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="count feasible sequences")
    _add_scenario_opts(p, with_nkt=True)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("enumerate", help="list (or value) every feasible sequence")
    _add_scenario_opts(p, with_nkt=True)
    p.add_argument("--evaluate", action="store_true",
                   help="value each sequence (needs --scenario)")
    p.add_argument("--out", default="option_values.csv",
                   help="CSV for the option-value distribution ('-' = stdout)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("evaluate", help="value one sequence")
    _add_scenario_opts(p)
    p.add_argument("--sequence", required=True, help="e.g. '[[4],[2],[1],[3]]'")
    p.add_argument("--diagnostics", nargs="?", const="-",
                   help="dump value surfaces as CSV (default stdout)")
    p.add_argument("--dump-paths", dest="dump_paths",
                   help="dump the demand tensor (.npy or CSV)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("myopia", help="print a myopic baseline sequence")
    _add_scenario_opts(p)
    p.add_argument("--mode", choices=("high", "low"), required=True)
    p.set_defaults(func=cmd_myopia)

    p = sub.add_parser("sweep", help="sensitivity sweep over one axis")
    _add_scenario_opts(p)
    p.add_argument("--axis", required=True,
                   choices=("k", "spillover", "f_end", "zeta", "mu_sigma"))
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--policies", default="myopia-h,myopia-l",
                   help="comma list: myopia-h, myopia-l, seq:[[...]], file:PATH")
    p.add_argument("--seeds", type=int, default=5, help="MC replications per cell")
    p.add_argument("--out", default="sweep_out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("casestudy", help="bundled city case study")
    p.add_argument("--city", required=True,
                   choices=("shanghai", "beijing", "nyc7", "nyc8", "shanghai4",
                            "shanghai5", "shanghai6", "shanghai7", "shanghai8",
                            "beijing6", "beijing9"))
    p.add_argument("--k", type=int)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-paths", type=int, dest="n_paths")
    p.add_argument("--sequence", help="extra staged policy to include")
    p.add_argument("--out", default="casestudy_out")
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("metrics", help="E[NPV] and profitability per policy")
    _add_scenario_opts(p)
    p.add_argument("--policies", default="all-in,myopia-h,myopia-l")
    p.add_argument("--congestion", action="store_true",
                   help="apply the congestion-sensitive ridership equilibrium")
    p.add_argument("--out", default="-", help="CSV output ('-' = stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export", help="investment-time / co-investment matrices")
    _add_scenario_opts(p)
    p.add_argument("--policies", default="myopia-h,myopia-l")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--dump-paths", dest="dump_paths")
    p.add_argument("--out", default="export_out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="bridge server (line protocol ssrd/1)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true")
    group.add_argument("--listen", help="HOST:PORT")
    p.add_argument("--scenarios", dest="scenarios_dir",
                   help="directory of scenario files (default: bundled registry)")
    p.add_argument("--n-paths", type=int, dest="n_paths")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataError, InvalidActionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
