"""Benchmark harnesses: staff sweep, zoning impact, predictors, local MIP, scalability.

Every harness compares its arms on one shared scenario batch (paired
comparisons) and returns plain row dicts. Wall-clock measurements are kept in
separate rows so the result tables are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import math
import time

import numpy as np
from scipy.stats import spearmanr

from .demand import scenario_seed
from .localmip import LocalMIPPolicy
from .predictors import SeriesBuffer, make_availability, regression_scores
from .relocation import RankingPolicy
from .sim import SimContext, run_saa, run_scenario, scenario_batch
from .tuning import PolicyEvaluator, SearchSpace, search

# Separately tuned local-MIP parameters on the default synthetic instance
# (60 coordinate-refine trials, 10 shared scenarios, trip time only).
MIP_TUNED = {"w_tt": 0.022835, "w_d": 351.153, "r_th": -6.5029}


def dataset_context(ds, history=None, events=None, horizon=96) -> SimContext:
    return SimContext(ds.travel, horizon, lam=ds.lam(), presence=ds.presence, history=history, events=events)


def pct(new, old) -> float:
    return 100.0 * (new / old - 1.0) if old else 0.0


def paired_share(a, b) -> float:
    """Share of scenarios in which run ``a`` scores at least as high as ``b``."""
    ta = np.array([m.trip_time for m in a.metrics])
    tb = np.array([m.trip_time for m in b.metrics])
    return float(np.mean(ta >= tb))


def tune_policy(ctx, policy, budget, scenarios, penalty=10.0, seed=0, strategy="coordinate-refine",
                start=None, space=None):
    """Search ``(w_tt, w_d, r_th)`` for ``policy`` on a fixed scenario batch."""
    ev = PolicyEvaluator(ctx, policy, scenarios, penalty)
    return search(space or SearchSpace(), budget, ev, strategy, seed=seed, start=start)


def summarize(name, res, base=None) -> dict:
    row = {
        "policy": name,
        "trip_time": res.mean,
        "trip_time_std": res.std,
        "trips": res.mean_of("trips"),
        "relocations": res.mean_of("relocations"),
        "transits": res.mean_of("transits"),
        "conflicts": res.mean_of("conflicts"),
    }
    if base is not None:
        row["dt_pct"] = pct(res.mean, base.mean)
        row["dn_pct"] = pct(res.mean_of("trips"), base.mean_of("trips"))
    return row


# --- staff sweep -------------------------------------------------------------------


def staff_sweep(ctx, policy, staffs, n, fleet=300, seed=0):
    """Ranking policy at every staff size on the same demand and car draws.

    The batch is sampled once per staff size from the same seed stream, so
    demand and initial cars coincide across rows; only staff placement
    differs. Staff 0 is the baseline.
    """
    rows, base = [], None
    for k in staffs:
        sc = scenario_batch(ctx, n, fleet, k, seed)
        res = run_saa(ctx, n, policy if k > 0 else None, scenarios=sc)
        if base is None:
            base = res if k == 0 else run_saa(ctx, n, None, scenarios=sc)
        rows.append({
            "staff": k,
            "trip_time": res.mean,
            "trip_time_std": res.std,
            "dt_pct": pct(res.mean, base.mean),
            "trips": res.mean_of("trips"),
            "trips_std": float(np.std([m.trips for m in res.metrics], ddof=1)) if n > 1 else 0.0,
            "dn_pct": pct(res.mean_of("trips"), base.mean_of("trips")),
            "relocations": res.mean_of("relocations"),
            "transits": res.mean_of("transits"),
            "conflicts": res.mean_of("conflicts"),
        })
    return rows


def sweep_trend(rows):
    """Spearman correlation of staff against mean trip time, and the gains
    (percentage points) from 0 to 5 and from 15 to 20 staff."""
    staff = np.array([r["staff"] for r in rows])
    t = np.array([r["trip_time"] for r in rows])
    rho = float(spearmanr(staff, t).statistic)
    at = {r["staff"]: r["dt_pct"] for r in rows}
    g05 = at[5] - at[0] if 0 in at and 5 in at else math.nan
    g1520 = at[20] - at[15] if 15 in at and 20 in at else math.nan
    return rho, g05, g1520


# --- zoning impact -----------------------------------------------------------------


def euclidean_partitions(points, k, seed=0) -> dict:
    """Comparison partitions of cell centers into ``k`` zones."""
    from sklearn.cluster import AgglomerativeClustering, BisectingKMeans, KMeans

    X = np.asarray(points, dtype=float)
    return {
        "kmeans": KMeans(k, n_init=20, random_state=seed).fit_predict(X),
        "bisecting-kmeans": BisectingKMeans(k, n_init=20, random_state=seed).fit_predict(X),
        "agglomerative-average": AgglomerativeClustering(k, linkage="average").fit_predict(X),
        "agglomerative-complete": AgglomerativeClustering(k, linkage="complete").fit_predict(X),
        "agglomerative-ward": AgglomerativeClustering(k, linkage="ward").fit_predict(X),
    }


def zoning_impact(city, partitions: dict, n_eval=200, tune_trials=40, tune_scenarios=30, fleet=300, staff=7,
                  seed=0, params=None):
    """Ranking policy gain over the baseline on each partition of the cell city.

    With ``params=None`` the policy is tuned separately on every partition
    with the same budget (``tune_trials`` trials on ``tune_scenarios``
    scenarios drawn from a seed stream disjoint from the evaluation one);
    otherwise the given parameters are used everywhere.
    """
    rows = []
    for name, labels in partitions.items():
        ds = city.zone_dataset(labels)
        ctx = dataset_context(ds)
        if params is None:
            tune_sc = scenario_batch(ctx, tune_scenarios, fleet, staff, seed + 1)
            best, _ = tune_policy(ctx, RankingPolicy(), tune_trials, tune_sc, seed=seed)
            prm = best.params
        else:
            prm = dict(params)
        sc = scenario_batch(ctx, n_eval, fleet, staff, seed)
        base = run_saa(ctx, n_eval, None, scenarios=sc)
        res = run_saa(ctx, n_eval, RankingPolicy(**prm), scenarios=sc)
        row = {"method": name, "zones": int(np.unique(labels).size)}
        row.update(summarize("RB", res, base))
        del row["policy"]
        row.update({"base_trip_time": base.mean, "base_trips": base.mean_of("trips")})
        row.update({k: float(v) for k, v in prm.items()})
        rows.append(row)
    return rows


# --- predictors --------------------------------------------------------------------


def heldout_r2(name, history, h=2, train_frac=0.7, window=672, strength=1.0):
    """Mean r² over zones of an availability predictor on the held-out tail."""
    hist = np.asarray(history, dtype=float)
    split = int(round(train_frac * len(hist)))
    pred = make_availability(name, window, h, strength)
    if name.startswith("linear"):
        pred.fit(hist[:split])
    need = max(pred.window, 1)
    start = max(split, need - 1)
    targets = np.arange(start + h, len(hist))
    buf = SeriesBuffer(hist.shape[1], need, hist[start + 1 - need : start + 1])
    out = np.empty((targets.size, hist.shape[1]))
    for k in range(targets.size):
        out[k] = pred.predict(buf)
        buf.push(hist[start + 1 + k])
    scores = []
    for z in range(hist.shape[1]):
        y = hist[targets, z]
        if np.ptp(y) > 0:
            scores.append(regression_scores(y, out[:, z])["r2"])
    return float(np.mean(scores)) if scores else math.nan


def predictor_bench(ctx, names, params, n=100, fleet=300, staff=7, seed=0, h=2):
    """Held-out r² and policy outcomes per availability predictor.

    ``ctx.history`` supplies both the r² evaluation series and the buffers of
    the linear predictors.
    """
    sc = scenario_batch(ctx, n, fleet, staff, seed)
    rows = []
    for name in names:
        pol = RankingPolicy(**params, availability=name, h=h)
        res = run_saa(ctx, n, pol, scenarios=sc)
        row = {"predictor": name, "r2": heldout_r2(name, ctx.history, h)}
        row.update(summarize(name, res))
        del row["policy"]
        rows.append(row)
    return rows


# --- greedy against local MIP -------------------------------------------------------


def mip_comparison(ctx, rb_params, mip_params=None, n=200, fleet=300, staff=7, seed=0, solver="highs",
                   time_budget_ms=2000):
    """NoOpt, ranking and local-MIP policies on the same scenarios.

    Returns the summary rows, the paired agreement shares
    ``{"RB>=NoOpt": ..., "MIP>=RB": ...}`` and the raw results.
    """
    sc = scenario_batch(ctx, n, fleet, staff, seed)
    base = run_saa(ctx, n, None, scenarios=sc)
    rb = run_saa(ctx, n, RankingPolicy(**rb_params), scenarios=sc)
    mip_pol = LocalMIPPolicy(**(mip_params or MIP_TUNED), solver=solver, time_budget_ms=time_budget_ms)
    hits = 0
    results = []
    for s in sc:
        results.append(run_scenario(s, ctx, mip_pol, record_log=False))
        hits += mip_pol.budget_hits_
    scores = np.array([r.metrics.trip_time for r in results])
    from .sim import SAAResult

    mip = SAAResult(float(scores.mean()), float(scores.std(ddof=1)) if n > 1 else 0.0, results)
    rows = [summarize("NoOpt", base, base), summarize("RB", rb, base), summarize("MIP", mip, base)]
    for r in rows:
        r["budget_hits"] = hits if r["policy"] == "MIP" else 0
    shares = {"RB>=NoOpt": paired_share(rb, base), "MIP>=RB": paired_share(mip, rb)}
    return rows, shares, {"NoOpt": base, "RB": rb, "MIP": mip}


# --- scalability ---------------------------------------------------------------------


def subset_context(ds, zones):
    """Context restricted to ``zones`` (travel and intensities sliced)."""
    z = np.asarray(zones)
    lam = ds.lam()[np.ix_(z, z)]
    pres = ds.presence[z]
    return SimContext(ds.travel[np.ix_(z, z)], 96, lam=lam, presence=pres / pres.sum())


def scalability(ds, zone_counts, staff_sizes, params, n=100, seed=0, fleet=None):
    """Policy decision time per scenario on random zone subsets.

    Vehicles are redistributed over the selected zones in proportion to their
    overnight presence; the total scales with the share of zones kept
    (``fleet`` is the full-instance fleet). Only the policy calls are timed.
    Returns ``(rows, timing_rows)``: ``rows`` hold the deterministic counts,
    ``timing_rows`` the measured seconds.
    """
    N = ds.travel.shape[0]
    fleet = ds.spec.fleet if fleet is None else fleet
    rows, timing = [], []
    for n_p in zone_counts:
        rng = np.random.default_rng(scenario_seed(seed, int(n_p)))
        zones = np.sort(rng.choice(N, size=int(n_p), replace=False))
        ctx = subset_context(ds, zones)
        f = max(1, int(round(fleet * n_p / N)))
        for k in staff_sizes:
            sc = scenario_batch(ctx, n, f, k, seed)
            res = [run_scenario(s, ctx, RankingPolicy(**params), record_log=False) for s in sc]
            dt = np.array([r.decision_time for r in res])
            rows.append({"zones": int(n_p), "staff": int(k), "fleet": f,
                         "relocations": float(np.mean([r.metrics.relocations for r in res])),
                         "transits": float(np.mean([r.metrics.transits for r in res]))})
            timing.append({"zones": int(n_p), "staff": int(k), "mean_s": float(dt.mean()),
                           "std_s": float(dt.std(ddof=1)) if n > 1 else 0.0})
    return rows, timing


def loglog_slope(timing_rows, staff=None):
    """Least-squares slope of log(mean time) against log(zones)."""
    sel = [r for r in timing_rows if staff is None or r["staff"] == staff]
    x = np.log([r["zones"] for r in sel])
    y = np.log([r["mean_s"] for r in sel])
    return float(np.polyfit(x, y, 1)[0])


# --- output --------------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.6f}"
    return str(v)


def write_rows(path, rows, fields=None):
    """CSV with one header line; floats at fixed precision for reproducibility."""
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt(r.get(k, "")) for k in fields])


class Stopwatch:
    """Collects ``(stage, seconds)`` pairs for a ``*_timing.csv`` file."""

    def __init__(self):
        self.rows = []

    def __call__(self, stage):
        sw = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                sw.rows.append({"stage": stage, "seconds": time.perf_counter() - self.t0})

        return _Ctx()
