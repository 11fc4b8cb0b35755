"""Hyperparameter search for relocation policies.

The objective rewards client trip time and penalizes an imbalance between
relocations and scooter transits:

    f = mean trip hours - penalty * |mean relocations - mean transits|

All trials are evaluated on one fixed batch of scenarios (common random
numbers), so ``f`` is a deterministic function of the parameters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from ._validation import check_count
from .sim import run_saa

PARAMS = ("w_tt", "w_d", "r_th")
LOG_SCALE = {"w_tt"}
INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SearchSpace:
    w_tt: tuple = (1e-4, 1.0)
    w_d: tuple = (20.0, 1000.0)
    r_th: tuple = (-30.0, 30.0)

    def __post_init__(self):
        for name in PARAMS:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: lower bound must be below upper bound")
            if name in LOG_SCALE and lo <= 0:
                raise ValueError(f"{name}: log-scaled bounds must be positive")

    def bounds(self, name):
        return getattr(self, name)

    def to_unit(self, name, value):
        lo, hi = self.bounds(name)
        if name in LOG_SCALE:
            return (math.log(value) - math.log(lo)) / (math.log(hi) - math.log(lo))
        return (value - lo) / (hi - lo)

    def from_unit(self, name, u):
        lo, hi = self.bounds(name)
        u = min(max(u, 0.0), 1.0)
        if name in LOG_SCALE:
            return math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))
        return lo + u * (hi - lo)

    def sample(self, rng) -> dict:
        return {name: self.from_unit(name, rng.random()) for name in PARAMS}


@dataclass
class Trial:
    index: int
    params: dict
    objective: float
    t_mean: float = math.nan
    relocations: float = math.nan
    transits: float = math.nan
    batch_id: int = 0
    extra: dict = field(default_factory=dict)


def tuning_objective(metrics, penalty: float = 10.0):
    """Return ``(f, t_mean, R, T)`` for a nonempty list of per-scenario Metrics."""
    if not metrics:
        raise ValueError("tuning objective needs at least one scenario")
    t_mean = float(np.mean([m.trip_time for m in metrics]))
    R = float(np.mean([m.relocations for m in metrics]))
    T = float(np.mean([m.transits for m in metrics]))
    return t_mean - penalty * abs(R - T), t_mean, R, T


class PolicyEvaluator:
    """Evaluate a policy's parameters on a fixed scenario batch."""

    def __init__(self, ctx, policy, scenarios, penalty=10.0, batch_id=0):
        self.ctx = ctx
        self.policy = policy
        self.scenarios = scenarios
        self.penalty = penalty
        self.batch_id = batch_id

    def __call__(self, params, index=0) -> Trial:
        pol = clone(self.policy).set_params(**params)
        res = run_saa(self.ctx, len(self.scenarios), pol, scenarios=self.scenarios)
        f, t_mean, R, T = tuning_objective(res.metrics, self.penalty)
        extra = {"conflicts": res.mean_of("conflicts"), "trips": res.mean_of("trips")}
        return Trial(index, dict(params), f, t_mean, R, T, self.batch_id, extra)


def _as_trial(out, params, index):
    if isinstance(out, Trial):
        out.index = index
        return out
    return Trial(index, dict(params), float(out))


def search(space: SearchSpace, budget: int, evaluate, strategy: str = "random", seed: int = 0,
           random_fraction: float = 0.3, start=None):
    """Maximize ``evaluate(params)`` over ``space`` with exactly ``budget`` evaluations.

    Parameters
    ----------
    evaluate : callable
        Maps a parameter dict to a :class:`Trial` or a float objective.
    strategy : {"random", "coordinate-refine"}
        ``random`` samples uniformly (log-uniformly for ``w_tt``).
        ``coordinate-refine`` spends ``random_fraction`` of the budget on
        random samples (or starts from ``start``), then cycles over the
        coordinates running golden-section searches in a bracket around the
        incumbent that halves every cycle.

    Returns
    -------
    best : Trial
    history : list of Trial, in evaluation order
    """
    budget = check_count(budget, "budget", 1)
    if strategy not in ("random", "coordinate-refine"):
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    history = []

    def run(params):
        trial = _as_trial(evaluate(params), params, len(history))
        if not math.isfinite(trial.objective):
            trial.objective = -math.inf
        history.append(trial)
        return trial

    if strategy == "random":
        for _ in range(budget):
            run(space.sample(rng))
        return max(history, key=lambda tr: (tr.objective, -tr.index)), history

    if start is not None:
        run(dict(start))
    n_random = max(1 if start is None else 0, int(random_fraction * budget))
    for _ in range(min(n_random, budget - len(history))):
        run(space.sample(rng))
    best = max(history, key=lambda tr: (tr.objective, -tr.index))
    width = 0.5
    while len(history) < budget:
        for name in PARAMS:
            if len(history) >= budget:
                break
            best = _golden_pass(space, name, best, width, run, budget - len(history))
            best = max(history, key=lambda tr: (tr.objective, -tr.index))
        width /= 2
        if width < 1e-4:
            width = 0.5
    return max(history, key=lambda tr: (tr.objective, -tr.index)), history


def _golden_pass(space, name, incumbent, width, run, remaining, steps=5):
    """Golden-section search along one coordinate in unit coordinates."""
    u0 = space.to_unit(name, incumbent.params[name])
    a, b = max(0.0, u0 - width), min(1.0, u0 + width)
    cache = {}

    def f(u):
        if u not in cache:
            params = dict(incumbent.params)
            params[name] = space.from_unit(name, u)
            cache[u] = run(params).objective
        return cache[u]

    budget = min(remaining, steps + 1)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    if budget < 2:
        f(c)
        return incumbent
    fc, fd = f(c), f(d)
    for _ in range(budget - 2):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return incumbent


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "w_tt", "w_d", "r_th", "objective", "t_mean", "R", "T"])
        for tr in history:
            p = tr.params
            w.writerow([tr.index] + [f"{p.get(k, math.nan):.6g}" for k in PARAMS]
                       + [f"{v:.6f}" for v in (tr.objective, tr.t_mean, tr.relocations, tr.transits)])


def plateau_share(history, level=0.95) -> float:
    """Fraction of trials whose objective reaches ``level`` times the best."""
    obj = np.array([tr.objective for tr in history])
    best = obj.max()
    return float(np.mean(obj >= level * best)) if best > 0 else float(np.mean(obj >= best))
