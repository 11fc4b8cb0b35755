import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetreloc.demand import Scenario, effective_travel_time, sample_scenario
from fleetreloc.localmip import (
    EQ,
    GE,
    LE,
    LocalMIPPolicy,
    ProgramBuilder,
    build_full_model,
    build_relocation_ip,
    build_transit_ip,
    export_lp,
    linearize,
    log_to_assignment,
    parse_lp,
    solve,
    solve_exact,
)
from fleetreloc.relocation import RankingPolicy
from fleetreloc.sim import SimContext, run_scenario, score


def random_program(rng):
    """Small random program with up to 6 variables bounded by 3."""
    n = int(rng.integers(1, 7))
    b = ProgramBuilder()
    b.add_vars([f"x{k}" for k in range(n)], rng.integers(0, 4, n), rng.integers(-3, 4, n).astype(float))
    rows = []
    for r in range(int(rng.integers(0, 4))):
        a = rng.integers(-2, 3, n).astype(float)
        sense = int(rng.choice([LE, EQ, GE]))
        rhs = float(rng.integers(-2, 6))
        b.add_row(np.arange(n), a, sense, rhs, f"r{r}")
        rows.append((a, sense, rhs))
    terms = []
    for _ in range(int(rng.integers(0, 3))):
        idx = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        w = rng.integers(-1, 2, idx.size)
        coef, const, th = float(rng.integers(-2, 3)), float(rng.integers(-4, 5)) / 2, float(rng.uniform(-3, 3))
        b.add_piecewise(coef, idx, w, const, th)
        terms.append((idx, w, coef, const, th))
    b.constant = float(rng.integers(-3, 4))
    return b.build(), rows, terms


def enumerate_optimum(ip, rows, terms):
    """Brute force over the whole box; ``None`` when infeasible."""
    best = None
    for x in itertools.product(*(range(int(u) + 1) for u in ip.upper)):
        x = np.array(x)
        ok = True
        for a, sense, rhs in rows:
            v = a @ x
            ok &= v <= rhs if sense == LE else (v >= rhs if sense == GE else v == rhs)
        if not ok:
            continue
        f = ip.constant + ip.objective @ x
        for idx, w, coef, const, th in terms:
            e = const + w @ x[idx]
            f += coef * e if e < th else 0.0
        best = f if best is None else max(best, f)
    return best


def test_exact_solver_matches_enumeration_on_100_programs():
    rng = np.random.default_rng(2024)
    infeasible = 0
    for _ in range(100):
        ip, rows, terms = random_program(rng)
        ref = enumerate_optimum(ip, rows, terms)
        sol = solve_exact(ip)
        if ref is None:
            infeasible += 1
            assert sol.status == "infeasible"
            continue
        assert sol.status == "optimal"
        assert ip.is_feasible(sol.x)
        assert sol.objective == pytest.approx(ref, abs=1e-9)
        assert ip.evaluate(sol.x) == pytest.approx(ref, abs=1e-9)
    assert 0 < infeasible < 50  # both outcomes exercised


def test_highs_matches_exact_on_random_programs():
    rng = np.random.default_rng(7)
    for _ in range(60):
        ip, _, _ = random_program(rng)
        a, b = solve_exact(ip), solve(ip, "highs")
        assert a.status == b.status
        if a.status == "optimal":
            assert b.objective == pytest.approx(a.objective, abs=1e-6)
            assert ip.is_feasible(b.x)


def test_cut_is_exact_indicator():
    b = ProgramBuilder()
    b.add_vars(["a"], [5])
    b.add_piecewise(1.0, [0], [1], -2.0, 0.0)  # e = a - 2 counted while e < 0
    ip = b.build()
    assert [ip.piecewise[0].value([a]) for a in range(5)] == [-2.0, -1.0, 0.0, 0.0, 0.0]
    b = ProgramBuilder()
    b.add_vars(["a"], [5])
    b.add_piecewise(1.0, [0], [1], -2.5, 0.0)
    assert b.build().piecewise[0].cut == 2
    with pytest.raises(ValueError):
        ProgramBuilder().add_piecewise(1.0, [0], [0.5], 0.0, 0.0)


def test_linearized_rows_agree_with_indicator():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ip, _, _ = random_program(rng)
        lin = linearize(ip)
        n = ip.n_vars
        for x in itertools.product(*(range(int(u) + 1) for u in ip.upper)):
            x = np.array(x)
            aux = []
            for p in ip.piecewise:
                s = int(p.weights @ x[p.index])
                z = int(s <= p.cut)
                aux += [z, s * z]
            full = np.r_[x, aux].astype(float)
            ax = lin.A @ full
            ok = np.where(lin.sense == LE, ax <= lin.rhs + 1e-9,
                          np.where(lin.sense == GE, ax >= lin.rhs - 1e-9, np.abs(ax - lin.rhs) <= 1e-9))
            if ip.is_feasible(x):
                assert ok.all()
                assert lin.constant + lin.objective @ full == pytest.approx(ip.evaluate(x))
            assert n + 2 * len(ip.piecewise) == full.size


def test_two_zone_relocation_example():
    ip = build_relocation_ip([3.0, -2.0], np.zeros((2, 2)), np.array([1, 0]), np.array([1, 0]), 0.0, 0.0)
    assert ip.names == ["ur_0_1"]
    assert ip.evaluate([0]) == -2.0 and ip.evaluate([1]) == -1.0
    for solver in ("exact", "highs"):
        sol = solve(ip, solver)
        assert sol.status == "optimal" and sol.x.tolist() == [1] and sol.objective == pytest.approx(-1.0)


def test_empty_relocation_program_keeps_constant():
    U = np.array([-3.0, 1.0, -0.5])
    ip = build_relocation_ip(U, np.zeros((3, 3)), np.array([2, 0, 1]), np.zeros(3, dtype=int), 0.1, 0.0)
    assert ip.n_vars == 0
    for solver in ("exact", "highs"):
        assert solve(ip, solver).objective == pytest.approx(-3.5)


def test_transit_examples():
    ip = build_transit_ip([0.0, 5.0], np.zeros((2, 2)), np.array([1, 0]), 0.0)
    for solver in ("exact", "highs"):
        sol = solve(ip, solver)
        assert sol.x.tolist() == [1] and sol.objective == pytest.approx(5.0)
    ip = build_transit_ip(np.zeros(3), np.full((3, 3), 10.0), np.array([2, 1, 0]), 0.05)
    assert not solve(ip, "exact").x.any() and not solve(ip, "highs").x.any()
    assert build_transit_ip(np.ones(2), np.zeros((2, 2)), np.array([0, 0]), 0.1).n_vars == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_relocation_cannot_help_when_no_zone_below_threshold(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 4))
    r_th = float(rng.uniform(-3, 0))
    U = r_th + rng.uniform(0, 4, N)
    xv, xs = rng.integers(0, 3, N), rng.integers(0, 2, N)
    ip = build_relocation_ip(U, rng.uniform(1, 30, (N, N)), xv, xs, 0.0, r_th)
    if ip.n_vars:
        assert solve_exact(ip).objective == pytest.approx(ip.evaluate(np.zeros(ip.n_vars, dtype=int)))


def test_positive_threshold_rewards_pushing_zones_below_it():
    # with r_th > 0 a zone pushed into [0, r_th) adds a positive term
    U = np.array([2.5, 2.5])
    ip = build_relocation_ip(U, np.zeros((2, 2)), np.array([1, 0]), np.array([1, 0]), 0.0, 2.0)
    assert ip.evaluate([0]) == 0.0
    assert solve_exact(ip).objective == pytest.approx(1.5)


def test_lp_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(30):
        ip, _, _ = random_program(rng)
        assert parse_lp(export_lp(ip)).equals(ip)
    empty = ProgramBuilder().build()
    text = export_lp(empty)
    assert "Maximize" in text and "End" in text
    assert parse_lp(text).equals(empty)
    ip = build_relocation_ip([3.0, -2.0, 0.5], np.full((3, 3), 7.0), np.array([2, 0, 1]), np.array([1, 0, 1]),
                             0.07, -1.25)
    assert parse_lp(export_lp(ip)).equals(ip)


def toy_oracle(D, travel, x_v0, x_s0, H):
    """Best total trip hours by enumerating every decision of every slot."""
    N = D.shape[0]
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j]
    dur = lambda i, j, t: max(1, math.ceil(travel[i, j, t] / 15.0))

    def rec(t, xv, xs, arr_v, arr_s):
        if t == H:
            return 0.0
        xv = [xv[k] + arr_v.get((t, k), 0) for k in range(N)]
        xs = [xs[k] + arr_s.get((t, k), 0) for k in range(N)]
        dem = [(i, j) for i in range(N) for j in range(N) if D[i, j, t] > 0]
        best = -1.0
        for served in itertools.product(*(range(D[i, j, t] + 1) for i, j in dem)):
            for rel in itertools.product(range(2), repeat=len(pairs)):
                for tr in itertools.product(range(2), repeat=len(pairs)):
                    cars = [xv[k] for k in range(N)]
                    staff = [xs[k] for k in range(N)]
                    av, ast = dict(arr_v), dict(arr_s)
                    gain = 0.0
                    for (i, j), n in zip(dem, served):
                        cars[i] -= n
                        av[(t + dur(i, j, t), j)] = av.get((t + dur(i, j, t), j), 0) + n
                        gain += n * effective_travel_time(travel, i, j, t + 1, H) / 60.0
                    for (i, j), n in zip(pairs, rel):
                        cars[i] -= n
                        staff[i] -= n
                        a = t + dur(i, j, t)
                        av[(a, j)] = av.get((a, j), 0) + n
                        ast[(a, j)] = ast.get((a, j), 0) + n
                    for (i, j), n in zip(pairs, tr):
                        staff[i] -= n
                        a = t + dur(i, j, t)
                        ast[(a, j)] = ast.get((a, j), 0) + n
                    if min(cars) < 0 or min(staff) < 0:
                        continue
                    best = max(best, gain + rec(t + 1, cars, staff, av, ast))
        return best

    return rec(0, list(x_v0), list(x_s0), {}, {})


def test_full_model_matches_decision_enumeration_on_toy():
    rng = np.random.default_rng(5)
    H = 4
    for case in range(6):
        travel = rng.choice([10.0, 20.0, 35.0], (2, 2, H))
        D = rng.integers(0, 2, (2, 2, H)) * (rng.random((2, 2, H)) < 0.5)
        x_v0 = [1, 0] if case % 2 else [1, 1]
        sc = Scenario.from_dense(D, x_v0, [1, 0])
        ctx = SimContext(travel, horizon=H)
        ip = build_full_model(sc, ctx).validate()
        ref = toy_oracle(D, travel, x_v0, [1, 0], H)
        for solver in ("exact", "highs"):
            sol = solve(ip, solver)
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(ref, abs=1e-6)


def test_full_model_relocation_reaches_demand():
    # one demand in zone 1 at slot 3; the only car sits in zone 0 with a staff member
    D = np.zeros((2, 2, 4), dtype=int)
    D[1, 0, 2] = 1
    ctx = SimContext(np.full((2, 2, 1), 15.0), horizon=4)
    sc = Scenario.from_dense(D, [1, 0], [1, 0])
    assert solve_exact(build_full_model(sc, ctx)).objective == pytest.approx(ctx.t_eff[2, 1, 0] / 60.0)
    assert solve_exact(build_full_model(sc, ctx, include_staff=False)).objective == 0.0


def _small_case(seed, staff):
    rng = np.random.default_rng(seed)
    lam = rng.gamma(0.6, 0.5, (3, 3, 4))
    ctx = SimContext(rng.uniform(5, 40, (3, 3, 4)), horizon=10, lam=lam)
    return ctx, sample_scenario(lam, 5, staff, seed=seed, horizon=10)


@pytest.mark.parametrize("seed", range(4))
def test_staff_free_optimum_bounds_baseline(seed):
    ctx, sc = _small_case(seed, 0)
    base = run_scenario(sc, ctx).metrics.trip_time
    sol = solve(build_full_model(sc, ctx), "highs")
    assert sol.status == "optimal" and sol.objective >= base - 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_simulated_log_is_feasible_point_of_full_model(seed):
    ctx, sc = _small_case(seed, 2)
    res = run_scenario(sc, ctx, RankingPolicy(w_tt=0.01, w_d=10.0, r_th=-1.0))
    ip = build_full_model(sc, ctx)
    x = log_to_assignment(ip, res.log, sc, ctx)
    assert ip.is_feasible(x)
    assert ip.evaluate(x) == pytest.approx(score(res.log, ctx))
    assert solve(ip, "highs").objective >= ip.evaluate(x) - 1e-6


def test_empty_demand_full_model_optimum_zero():
    ctx = SimContext(np.full((2, 2, 1), 15.0), horizon=3)
    sc = Scenario.from_dense(np.zeros((2, 2, 3), dtype=int), [1, 1], [1, 0])
    assert solve(build_full_model(sc, ctx), "highs").objective == 0.0


def test_local_mip_policy_runs_and_conserves():
    ctx, sc = _small_case(9, 2)
    for solver in ("exact", "highs"):
        pol = LocalMIPPolicy(w_tt=0.01, w_d=10.0, r_th=-1.0, solver=solver)
        res = run_scenario(sc, ctx, pol, audit=True)
        assert res.violations == 0 and pol.budget_hits_ == 0


@pytest.mark.slow
def test_full_model_at_city_scale_has_millions_of_nonzeros():
    from fleetreloc.synthetic import SyntheticSpec, generate_zone_dataset

    ds = generate_zone_dataset(SyntheticSpec())
    ctx = SimContext(ds.travel, 96, lam=ds.lam())
    sc = ctx.sampler().sample(300, 7, ds.presence, seed=1)
    ip = build_full_model(sc, ctx)
    N, H = 63, 96
    n_uv = int((sc.dense() > 0).sum())
    assert ip.n_vars == 2 * N * H + n_uv + 2 * N * (N - 1) * H
    assert ip.n_rows == 2 * (N + N * H + N * (H - 1))
    assert 1e6 <= ip.A.nnz <= 1e7
    assert len(export_lp(ip)) > 0
