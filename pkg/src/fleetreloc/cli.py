"""Command-line interface: ``fleetreloc <command> [options]``.

Every command reads an optional TOML config (sections mirror ``DEFAULTS``),
lets the global flags override the ``[run]`` section, and writes CSV files
into the output directory. Result CSVs hold no wall-clock values; timings go
to a separate ``<command>_timing.csv`` so re-runs are byte-identical.

Exit codes: 0 ok, 2 config error, 3 data error, 4 solver time budget exceeded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import bench
from ._validation import DataError
from .demand import (
    calibrate_lambda,
    read_tensor_csv,
    select_delta,
    smooth_trips,
    write_tensor_csv,
)
from .localmip import LocalMIPPolicy, build_full_model, export_lp
from .relocation import NoOpPolicy, RankingPolicy
from .sim import METRIC_FIELDS, SimContext, run_scenario, scenario_batch, write_metrics_csv
from .synthetic import CitySpec, SyntheticSpec, generate_cell_city, generate_zone_dataset

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BUDGET = 0, 2, 3, 4

DEFAULTS = {
    "run": {"seed": 0, "out": "out", "threads": 1, "scenarios": 100, "time_budget_ms": 2000,
            "paper_literal_update": False},
    "data": {"dir": ""},
    "instance": {"fleet": 300, "staff": 7, "horizon": 96},
    "policy": {"kind": "rb", "w_tt": 0.07, "w_d": 280.32, "r_th": -17.35, "h": 2, "availability": "last",
               "demand": "lambda", "scooter_factor": 1.0, "solver": "highs"},
    "mip": dict(bench.MIP_TUNED),
    "synthetic": {},
    "city": {},
    "zoning": {"target_zones": 63, "max_size": 0, "weights": [2.0, 1.0, 1.0, 1.0, 1.0], "zones_csv": "",
               "validate_days": 14, "horizons": [3, 6], "window": 672},
    "calibrate": {"deltas": [5, 10, 15, 20, 25, 30]},
    "tune": {"trials": 200, "scenarios": 30, "penalty": 10.0, "strategy": "coordinate-refine"},
    "bench": {"staff_max": 20, "zoning_tune_trials": 40, "zoning_tune_scenarios": 30,
              "predictors": ["last", "ma4", "ma6", "linear-l1", "linear-l2"], "history_days": 14,
              "scale_zones": [5, 10, 20, 40, 80, 160, 240, 365], "scale_staff": [3, 10, 20],
              "scale_base_zones": 400, "scale_scenarios": 100},
    "export": {"scenario": 0, "include_staff": True},
}


class ConfigError(Exception):
    pass


class BudgetExceeded(Exception):
    pass


# --- configuration -------------------------------------------------------------------


def load_config(path=None, overrides=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section, values in user.items():
            if section not in cfg or not isinstance(values, dict):
                raise ConfigError(f"unknown config section [{section}]")
            free = section in ("synthetic", "city")
            for key, val in values.items():
                if not free and key not in cfg[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg[section][key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg["run"][key] = val
    _check_spec(SyntheticSpec, cfg["synthetic"], "synthetic")
    _check_spec(CitySpec, cfg["city"], "city")
    if cfg["policy"]["kind"] not in ("none", "rb", "mip"):
        raise ConfigError("policy.kind must be none, rb or mip")
    return cfg


def _check_spec(cls, values, section):
    names = {f.name for f in fields(cls)}
    bad = set(values) - names
    if bad:
        raise ConfigError(f"unknown key(s) {sorted(bad)} in [{section}]")


def synthetic_spec(cfg) -> SyntheticSpec:
    return SyntheticSpec(**cfg["synthetic"])


def city_spec(cfg) -> CitySpec:
    vals = dict(cfg["city"])
    for k in ("mass", "road_density"):
        if k in vals:
            vals[k] = tuple(vals[k])
    return CitySpec(**vals)


def rb_params(cfg) -> dict:
    p = cfg["policy"]
    return {"w_tt": float(p["w_tt"]), "w_d": float(p["w_d"]), "r_th": float(p["r_th"])}


def make_policy(cfg, kind=None):
    p, run = cfg["policy"], cfg["run"]
    kind = kind or p["kind"]
    common = dict(h=p["h"], availability=p["availability"], demand=p["demand"], scooter_factor=p["scooter_factor"])
    if kind == "none":
        return NoOpPolicy()
    if kind == "rb":
        return RankingPolicy(**rb_params(cfg), paper_literal_update=bool(run["paper_literal_update"]), **common)
    return LocalMIPPolicy(**{k: float(v) for k, v in cfg["mip"].items()}, solver=p["solver"],
                          time_budget_ms=run["time_budget_ms"], **common)


# --- instance loading ------------------------------------------------------------------


class Instance:
    """Zone-level tensors either read from ``data.dir`` or generated."""

    def __init__(self, travel, lam, presence, dataset=None):
        self.travel, self.lam, self.presence, self.dataset = travel, lam, presence, dataset

    def context(self, cfg, history=None, events=None) -> SimContext:
        return SimContext(self.travel, cfg["instance"]["horizon"], lam=self.lam, presence=self.presence,
                          history=history, events=events)


def read_presence(path):
    with open(path, newline="") as fh:
        rows = sorted((int(r["zone_id"]), float(r["weight"])) for r in csv.DictReader(fh))
    return np.array([w for _, w in rows])


def load_instance(cfg) -> Instance:
    d = cfg["data"]["dir"]
    if not d:
        ds = generate_zone_dataset(synthetic_spec(cfg))
        return Instance(ds.travel, ds.lam(), ds.presence, ds)
    d = Path(d)
    if not (d / "travel.csv").exists():
        raise DataError(f"{d}: travel.csv not found")
    travel = read_tensor_csv(d / "travel.csv")
    if np.isnan(travel).any():
        raise DataError("travel.csv has gaps; impute them before simulating")
    if (d / "lambda.csv").exists():
        lam = read_tensor_csv(d / "lambda.csv", fill=0.0)
    else:
        tr, _ = smooth_trips(read_tensor_csv(d / "trips.csv", fill=0.0))
        lam = calibrate_lambda(tr, read_tensor_csv(d / "activity.csv", fill=0.0))
    N = travel.shape[0]
    presence = read_presence(d / "presence.csv") if (d / "presence.csv").exists() else np.full(N, 1.0 / N)
    if lam.shape[0] != N or presence.shape != (N,):
        raise DataError(f"zone counts disagree: travel {N}, lambda {lam.shape[0]}, presence {presence.size}")
    return Instance(travel, lam, presence)


def out_dir(cfg) -> Path:
    p = Path(cfg["run"]["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def baseline_history(ctx, days, fleet, seed):
    """Idle-car series from ``days`` independent days without relocation."""
    scs = scenario_batch(ctx, days, fleet, 0, seed)
    return np.concatenate([run_scenario(s, ctx, record_log=False, record_idle=True).idle for s in scs]).astype(float)


# --- commands ---------------------------------------------------------------------------


def cmd_gen_data(cfg, args):
    out = out_dir(cfg)
    ds = generate_zone_dataset(synthetic_spec(cfg))
    write_tensor_csv(out / "trips.csv", ds.trips)
    write_tensor_csv(out / "activity.csv", ds.activity)
    write_tensor_csv(out / "travel.csv", ds.travel)
    bench.write_rows(out / "presence.csv", [{"zone_id": z, "weight": w} for z, w in enumerate(ds.presence)])
    bench.write_rows(out / "coords.csv", [{"zone_id": z, "x": c[0], "y": c[1]} for z, c in enumerate(ds.coords)])
    if args.cells:
        from .hexgrid import write_grid_csv, write_road_csv

        city = generate_cell_city(city_spec(cfg))
        write_grid_csv(out / "grid.csv", city.grid)
        write_road_csv(out / "roads.csv", city.road_edges)
        bench.write_rows(out / "cells.csv", [
            {"cell_id": c.id, "road_density": float(city.road_density[k]), "land_use": int(city.land_use[k]),
             "presence": float(city.presence[k])} for k, c in enumerate(city.grid.cells)])
        series = [{"cell_id": c.id, "t": t, "cars": float(city.car_series[k, t]),
                   "activity": float(city.act_series[k, t])}
                  for k, c in enumerate(city.grid.cells) for t in range(city.car_series.shape[1])]
        bench.write_rows(out / "cell_series.csv", series)
    return EXIT_OK


def _cell_features(cfg):
    """Cell features from ``data.dir`` (grid/roads/cells/cell_series CSVs) or the synthetic city."""
    from .hexgrid import RoadGraph, adjacent_road_distances, read_grid_csv, read_road_csv
    from .zoning import CellFeatures

    d = cfg["data"]["dir"]
    if d and (Path(d) / "grid.csv").exists():
        d = Path(d)
        spec = city_spec(cfg)
        grid = read_grid_csv(d / "grid.csv", spec.side_m)
        pos = {cid: k for k, cid in enumerate(grid.ids)}
        with open(d / "cells.csv", newline="") as fh:
            dens = {int(r["cell_id"]): float(r["road_density"]) for r in csv.DictReader(fh)}
        with open(d / "cell_series.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        P = 1 + max(int(r["t"]) for r in rows)
        cars, act = np.zeros((len(grid), P)), np.zeros((len(grid), P))
        for r in rows:
            k = pos[int(r["cell_id"])]
            cars[k, int(r["t"])] = float(r["cars"])
            act[k, int(r["t"])] = float(r["activity"])
        g = RoadGraph.from_edges(read_road_csv(d / "roads.csv"), grid)
        return None, CellFeatures(grid, [dens[c] for c in grid.ids], cars, act, road_graph=g,
                                  rd_pairs=adjacent_road_distances(grid, g))
    city = generate_cell_city(city_spec(cfg))
    return city, city.features()


def _zoning(cfg, features):
    from .zoning import DistanceWeights, agglomerative_cluster, tune_max_size

    z = cfg["zoning"]
    w = DistanceWeights(*z["weights"])
    if z["max_size"]:
        return agglomerative_cluster(features, w, int(z["max_size"]))
    return tune_max_size(features, w, int(z["target_zones"]))


def cmd_zone(cfg, args):
    from .zoning import write_zones

    out = out_dir(cfg)
    sw = bench.Stopwatch()
    with sw("features"):
        _, feats = _cell_features(cfg)
    with sw("zoning"):
        zr = _zoning(cfg, feats)
    write_zones(out / "zones.csv", out / "zones.json", zr)
    bench.write_rows(out / "zone_timing.csv", sw.rows)
    return EXIT_OK


def _zone_labels(cfg, grid):
    from .zoning import read_zone_map

    path = cfg["zoning"]["zones_csv"] or str(Path(cfg["run"]["out"]) / "zones.csv")
    if not Path(path).exists():
        raise DataError(f"{path} not found; run the zone command first")
    m = read_zone_map(path)
    try:
        return np.array([m[c] for c in grid.ids])
    except KeyError as exc:
        raise DataError(f"cell {exc.args[0]} has no zone in {path}") from None


def cmd_validate_zones(cfg, args):
    from .synthetic import zone_history
    from .zoning import validate_zoning, write_validation

    out = out_dir(cfg)
    z = cfg["zoning"]
    city = generate_cell_city(city_spec(cfg))
    labels = _zone_labels(cfg, city.grid)
    ds = city.zone_dataset(labels)
    hist, _ = zone_history(ds, days=int(z["validate_days"]), seed=int(cfg["run"]["seed"]))
    rows, summary = validate_zoning(None, hist, tuple(z["horizons"]), int(z["window"]))
    write_validation(out / "validation.csv", rows)
    bench.write_rows(out / "validation_summary.csv", [
        {"horizon": h, "metric": m, "mean": v[0], "std": v[1], "median": v[2]}
        for h, d in summary.items() for m, v in d.items()])
    return EXIT_OK


def cmd_calibrate(cfg, args):
    d = Path(cfg["data"]["dir"] or cfg["run"]["out"])
    out = out_dir(cfg)
    try:
        trips = read_tensor_csv(d / "trips.csv", fill=0.0)
        act = read_tensor_csv(d / "activity.csv", fill=0.0)
    except OSError as exc:
        raise DataError(str(exc)) from None
    table = select_delta(act.sum(axis=0), trips.sum(axis=(0, 1)), cfg["calibrate"]["deltas"])
    bench.write_rows(out / "delta.csv", [{"delta": a, "r2": b, "dtw": c} for a, b, c in table])
    delta = args.delta or max(table, key=lambda r: (np.nan_to_num(r[1], nan=-np.inf), -r[2]))[0]
    tr, alpha = smooth_trips(trips)
    write_tensor_csv(out / "lambda.csv", calibrate_lambda(tr, act, delta))
    bench.write_rows(out / "calibration.csv", [{"delta": float(delta), "alpha": alpha}])
    return EXIT_OK


def _simulate_chunk(payload):
    ctx, scs, policy = payload
    return [run_scenario(s, ctx, policy, record_log=True) for s in scs]


def cmd_simulate(cfg, args):
    out = out_dir(cfg)
    inst = load_instance(cfg)
    ctx = inst.context(cfg)
    run, ins = cfg["run"], cfg["instance"]
    n = int(run["scenarios"])
    scs = scenario_batch(ctx, n, ins["fleet"], ins["staff"], int(run["seed"]))
    policy = make_policy(cfg)
    threads = max(1, int(run["threads"]))
    sw = bench.Stopwatch()
    with sw("simulate"):
        if threads == 1:
            results = _simulate_chunk((ctx, scs, policy))
        else:
            chunks = [scs[k::threads] for k in range(threads)]
            with ProcessPoolExecutor(threads) as pool:
                parts = list(pool.map(_simulate_chunk, [(ctx, c, policy) for c in chunks]))
            results = [None] * n
            for k, part in enumerate(parts):
                results[k::threads] = part
    name = getattr(policy, "name", "policy")
    write_metrics_csv(out / "metrics.csv", [(name, r) for r in results])
    trip = np.array([r.metrics.trip_time for r in results])
    summary = {"policy": name, "scenarios": n, "trip_time": float(trip.mean()),
               "trip_time_std": float(trip.std(ddof=1)) if n > 1 else 0.0}
    for f in METRIC_FIELDS:
        if f != "trip_time":
            summary[f] = float(np.mean([getattr(r.metrics, f) for r in results]))
    bench.write_rows(out / "summary.csv", [summary])
    for k in range(min(args.logs, n)):
        results[k].log.write_csv(out / f"decisions_{k}.csv")
    bench.write_rows(out / "simulate_timing.csv", sw.rows + [
        {"stage": f"decision_{k}", "seconds": r.decision_time} for k, r in enumerate(results)])
    hits = getattr(policy, "budget_hits_", 0) if threads == 1 else 0
    if hits:
        raise BudgetExceeded(f"{hits} local programs stopped at the time budget")
    return EXIT_OK


def cmd_tune(cfg, args):
    out = out_dir(cfg)
    inst = load_instance(cfg)
    ctx = inst.context(cfg)
    t, ins, run = cfg["tune"], cfg["instance"], cfg["run"]
    scs = scenario_batch(ctx, int(t["scenarios"]), ins["fleet"], ins["staff"], int(run["seed"]))
    policy = make_policy(cfg, "mip" if cfg["policy"]["kind"] == "mip" else "rb")
    sw = bench.Stopwatch()
    with sw("search"):
        best, hist = bench.tune_policy(ctx, policy, int(t["trials"]), scs, float(t["penalty"]),
                                       int(run["seed"]), t["strategy"])
    from .tuning import write_history

    write_history(out / "tune_history.csv", hist)
    row = {"trial": best.index, **best.params, "objective": best.objective, "t_mean": best.t_mean,
           "R": best.relocations, "T": best.transits, "conflicts": best.extra.get("conflicts", np.nan)}
    bench.write_rows(out / "tune_best.csv", [row])
    bench.write_rows(out / "tune_timing.csv", sw.rows)
    return EXIT_OK


def cmd_bench_staff(cfg, args):
    out = out_dir(cfg)
    ctx = load_instance(cfg).context(cfg)
    run = cfg["run"]
    sw = bench.Stopwatch()
    with sw("sweep"):
        rows = bench.staff_sweep(ctx, make_policy(cfg, "rb"), range(int(cfg["bench"]["staff_max"]) + 1),
                                 int(run["scenarios"]), cfg["instance"]["fleet"], int(run["seed"]))
    bench.write_rows(out / "staff_sweep.csv", rows)
    rho, g05, g1520 = bench.sweep_trend(rows)
    bench.write_rows(out / "staff_trend.csv", [{"spearman": rho, "gain_0_5": g05, "gain_15_20": g1520}])
    bench.write_rows(out / "bench-staff_timing.csv", sw.rows)
    return EXIT_OK


def cmd_bench_zoning(cfg, args):
    out = out_dir(cfg)
    b, run, ins = cfg["bench"], cfg["run"], cfg["instance"]
    sw = bench.Stopwatch()
    with sw("city"):
        city = generate_cell_city(city_spec(cfg))
        feats = city.features()
    with sw("zoning"):
        labels = _zoning(cfg, feats).labels(city.grid)
    parts = {"full-zoning": labels}
    parts.update(bench.euclidean_partitions(city.grid.centers(), int(np.unique(labels).size), int(run["seed"])))
    with sw("impact"):
        rows = bench.zoning_impact(city, parts, int(run["scenarios"]), int(b["zoning_tune_trials"]),
                                   int(b["zoning_tune_scenarios"]), ins["fleet"], ins["staff"], int(run["seed"]),
                                   rb_params(cfg) if args.fixed_params else None)
    bench.write_rows(out / "zoning_impact.csv", rows)
    bench.write_rows(out / "bench-zoning_timing.csv", sw.rows)
    return EXIT_OK


def cmd_bench_predictors(cfg, args):
    out = out_dir(cfg)
    inst = load_instance(cfg)
    run, ins = cfg["run"], cfg["instance"]
    ctx0 = inst.context(cfg)
    hist = baseline_history(ctx0, int(cfg["bench"]["history_days"]), ins["fleet"], int(run["seed"]) + 1)
    ctx = inst.context(cfg, history=hist)
    sw = bench.Stopwatch()
    with sw("bench"):
        rows = bench.predictor_bench(ctx, cfg["bench"]["predictors"], rb_params(cfg), int(run["scenarios"]),
                                     ins["fleet"], ins["staff"], int(run["seed"]), int(cfg["policy"]["h"]))
    bench.write_rows(out / "predictors.csv", rows)
    bench.write_rows(out / "bench-predictors_timing.csv", sw.rows)
    return EXIT_OK


def cmd_bench_mip(cfg, args):
    out = out_dir(cfg)
    ctx = load_instance(cfg).context(cfg)
    run, ins = cfg["run"], cfg["instance"]
    sw = bench.Stopwatch()
    with sw("compare"):
        rows, shares, _ = bench.mip_comparison(ctx, rb_params(cfg), {k: float(v) for k, v in cfg["mip"].items()},
                                               int(run["scenarios"]), ins["fleet"], ins["staff"], int(run["seed"]),
                                               cfg["policy"]["solver"], run["time_budget_ms"])
    bench.write_rows(out / "mip_compare.csv", rows)
    bench.write_rows(out / "mip_paired.csv", [{"comparison": k, "share": v} for k, v in shares.items()])
    bench.write_rows(out / "bench-mip_timing.csv", sw.rows)
    hits = rows[-1]["budget_hits"]
    if hits:
        raise BudgetExceeded(f"{hits} local programs stopped at the time budget")
    return EXIT_OK


def cmd_bench_scale(cfg, args):
    out = out_dir(cfg)
    b, run = cfg["bench"], cfg["run"]
    base = dict(cfg["synthetic"])
    n0 = int(b["scale_base_zones"])
    ref = synthetic_spec(cfg)
    # trips and cars per zone of the configured instance, on a wider area
    f = n0 / ref.n_zones
    base.update(n_zones=n0, radius_m=2.0 * ref.radius_m, daily_trips=ref.daily_trips * f,
                fleet=int(round(ref.fleet * f)))
    ds = generate_zone_dataset(SyntheticSpec(**base))
    rows, timing = bench.scalability(ds, b["scale_zones"], b["scale_staff"], rb_params(cfg),
                                     int(b["scale_scenarios"]), int(run["seed"]))
    bench.write_rows(out / "scale.csv", rows)
    bench.write_rows(out / "scale_timing.csv", timing)
    return EXIT_OK


def cmd_export_lp(cfg, args):
    out = out_dir(cfg)
    ctx = load_instance(cfg).context(cfg)
    ins, e = cfg["instance"], cfg["export"]
    k = int(e["scenario"])
    sc = scenario_batch(ctx, 1, ins["fleet"], ins["staff"], int(cfg["run"]["seed"]), start=k)[0]
    ip = build_full_model(sc, ctx, bool(e["include_staff"]))
    text = export_lp(ip)
    (out / "model.lp").write_text(text)
    bench.write_rows(out / "lp_stats.csv", [{"scenario": k, "variables": ip.n_vars, "rows": ip.n_rows,
                                            "nonzeros": int(ip.A.nnz), "bytes": len(text)}])
    return EXIT_OK


COMMANDS = {
    "gen-data": (cmd_gen_data, "write a synthetic zone instance (and optionally cell-level inputs)"),
    "zone": (cmd_zone, "cluster hex cells into zones"),
    "validate-zones": (cmd_validate_zones, "score availability predictability per zone"),
    "calibrate": (cmd_calibrate, "select delta and write the intensity tensor"),
    "simulate": (cmd_simulate, "run a scenario batch under the configured policy"),
    "tune": (cmd_tune, "search policy hyperparameters"),
    "bench-staff": (cmd_bench_staff, "trip time against staff size"),
    "bench-zoning": (cmd_bench_zoning, "policy gain on full zoning against Euclidean clusterers"),
    "bench-predictors": (cmd_bench_predictors, "availability predictors: r2 and policy outcomes"),
    "bench-mip": (cmd_bench_mip, "NoOpt, ranking and local-MIP policies on shared scenarios"),
    "bench-scale": (cmd_bench_scale, "decision time on random zone subsets"),
    "export-lp": (cmd_export_lp, "write the full-horizon model in CPLEX-LP format"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="base seed of the scenario stream")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes for scenario batches")
    common.add_argument("--scenarios", type=int, help="scenarios per batch")
    common.add_argument("--time-budget-ms", type=int, dest="time_budget_ms", help="per-program solver budget")
    common.add_argument("--paper-literal-update", action="store_const", const=True, default=None,
                        dest="paper_literal_update", help="lower the picked destination's score after each pick")
    p = argparse.ArgumentParser(prog="fleetreloc", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, parents=[common])
        if name == "gen-data":
            sp.add_argument("--cells", action="store_true", help="also write hex-cell inputs for zoning")
        elif name == "calibrate":
            sp.add_argument("--delta", type=float, help="use this delta instead of the best candidate")
        elif name == "simulate":
            sp.add_argument("--logs", type=int, default=0, help="write decision logs of the first N scenarios")
        elif name == "bench-zoning":
            sp.add_argument("--fixed-params", action="store_true",
                            help="use the configured policy parameters on every partition instead of tuning")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    keys = ("seed", "out", "threads", "scenarios", "time_budget_ms", "paper_literal_update")
    try:
        cfg = load_config(args.config, {k: getattr(args, k) for k in keys})
        return COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
