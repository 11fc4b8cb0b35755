import csv
import math

import numpy as np
import pytest

from fleetreloc.relocation import RankingPolicy
from fleetreloc.sim import Metrics, SimContext, scenario_batch
from fleetreloc.synthetic import SyntheticSpec, generate_zone_dataset
from fleetreloc.tuning import (
    PolicyEvaluator,
    SearchSpace,
    plateau_share,
    search,
    tuning_objective,
    write_history,
)


def test_objective_example():
    m = [Metrics(trip_time=500.0, relocations=160, transits=150)]
    assert tuning_objective(m) == (400.0, 500.0, 160.0, 150.0)
    two = [Metrics(trip_time=10.0, relocations=4, transits=0), Metrics(trip_time=20.0, relocations=0, transits=2)]
    assert tuning_objective(two, penalty=1.0)[0] == 15.0 - 1.0
    with pytest.raises(ValueError):
        tuning_objective([])


def test_search_space_validation_and_scaling():
    with pytest.raises(ValueError):
        SearchSpace(w_d=(5.0, 5.0))
    with pytest.raises(ValueError):
        SearchSpace(w_tt=(0.0, 1.0))
    s = SearchSpace()
    assert s.from_unit("w_tt", 0.5) == pytest.approx(0.01)  # geometric midpoint of 1e-4 and 1
    assert s.to_unit("r_th", 0.0) == pytest.approx(0.5)
    assert s.from_unit("w_d", 1.7) == 1000.0


def stub(params):
    return -(params["w_tt"] - 0.5) ** 2


@pytest.mark.parametrize("strategy", ["random", "coordinate-refine"])
def test_budget_one_returns_that_trial(strategy):
    best, hist = search(SearchSpace(), 1, stub, strategy, seed=4)
    assert len(hist) == 1 and best is hist[0]


@pytest.mark.parametrize("strategy", ["random", "coordinate-refine"])
def test_stub_search_converges(strategy):
    best, hist = search(SearchSpace(), 50, stub, strategy, seed=0)
    assert len(hist) == 50
    assert abs(best.params["w_tt"] - 0.5) < 0.05
    assert [tr.index for tr in hist] == list(range(50))


def test_search_is_deterministic_and_skips_nan():
    a = search(SearchSpace(), 20, stub, "coordinate-refine", seed=2)[1]
    b = search(SearchSpace(), 20, stub, "coordinate-refine", seed=2)[1]
    assert [t.params for t in a] == [t.params for t in b]
    best, hist = search(SearchSpace(), 10, lambda p: math.nan if p["r_th"] > 0 else 1.0, seed=1)
    assert best.objective == 1.0
    assert all(t.objective in (1.0, -math.inf) for t in hist)


def test_start_point_is_evaluated_first():
    start = {"w_tt": 0.07, "w_d": 280.32, "r_th": -17.35}
    best, hist = search(SearchSpace(), 12, stub, "coordinate-refine", start=start, random_fraction=0.0)
    assert hist[0].params == start
    assert best.objective >= hist[0].objective


def test_history_csv(tmp_path):
    _, hist = search(SearchSpace(), 5, stub, seed=3)
    write_history(tmp_path / "h.csv", hist)
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert len(rows) == 5
    assert list(rows[0]) == ["trial", "w_tt", "w_d", "r_th", "objective", "t_mean", "R", "T"]


@pytest.fixture(scope="module")
def small_batch():
    ds = generate_zone_dataset(SyntheticSpec())
    ctx = SimContext(ds.travel, 96, lam=ds.lam(), presence=ds.presence)
    return ctx, scenario_batch(ctx, 6, 300, 7, seed=3)


def test_policy_evaluator_is_deterministic(small_batch):
    ctx, sc = small_batch
    ev = PolicyEvaluator(ctx, RankingPolicy(), sc)
    p = {"w_tt": 0.02, "w_d": 300.0, "r_th": -8.0}
    a, b = ev(p), ev(p)
    assert a.objective == b.objective and a.extra == b.extra
    assert a.objective == pytest.approx(a.t_mean - 10.0 * abs(a.relocations - a.transits))


def test_trip_time_plateau_is_wide(small_batch):
    ctx, sc = small_batch
    _, hist = search(SearchSpace(), 30, PolicyEvaluator(ctx, RankingPolicy(), sc, penalty=0.0), seed=1)
    assert plateau_share(hist, 0.95) >= 0.10
