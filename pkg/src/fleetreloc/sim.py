"""Discrete-time simulation of a free-floating fleet with optional relocation policy.

Each slot runs, in order: materialization of vehicles and staff arriving in
that slot, client assignment, conflict accounting for staff who came to
relocate a car that is no longer there, then the policy's relocation and
transit decisions. Demand not served in its slot is lost.

Client assignment serves, per origin zone, a uniformly random subset of the
waiting demand units of size ``min(idle cars, waiting demand)``. The random
order is a counter-based hash of ``(scenario seed, slot, origin, destination,
unit index)`` so that two runs of the same scenario under different policies
see the same client priorities (common random numbers).
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ._validation import DataError, check_count, check_square_tensor
from .demand import SLOT_MINUTES, DemandSampler, Scenario, scenario_seed

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    # splitmix64 finalizer on uint64 arrays (wrapping arithmetic)
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def priority_keys(seed, t, i, j, m, zone_keys=None):
    """Hash-based priority of individual demand units (lower is served first)."""
    with np.errstate(over="ignore"):
        zk = np.arange(int(np.max(np.r_[i, j], initial=0)) + 1, dtype=np.uint64) if zone_keys is None \
            else np.asarray(zone_keys, dtype=np.uint64)
        k = _mix(np.full(len(t), np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.asarray(t, dtype=np.uint64))
        k = _mix(k ^ zk[i])
        k = _mix(k ^ zk[j])
        return _mix(k ^ np.asarray(m, dtype=np.uint64))


def sample_assignments(d_pending, x, rng) -> np.ndarray:
    """Serve ``min(x, sum(d_pending))`` demand units drawn without replacement.

    Returns the per-destination number of served units.
    """
    d = np.asarray(d_pending, dtype=np.int64)
    k = min(int(x), int(d.sum()))
    if k <= 0:
        return np.zeros_like(d)
    units = np.repeat(np.arange(d.size), d)
    chosen = rng.choice(units.size, size=k, replace=False)
    return np.bincount(units[chosen], minlength=d.size)


@dataclass
class SimContext:
    """Read-only tensors shared by every scenario of a run.

    ``travel`` has shape ``(N, N, P)`` in minutes; ``lam`` (optional) is the
    intensity tensor; ``history`` (optional) is a ``(length, N)`` array of past
    idle-vehicle counts used to seed availability predictors.
    """

    travel: np.ndarray
    horizon: int = 96
    dt: float = SLOT_MINUTES
    lam: np.ndarray | None = None
    history: np.ndarray | None = None
    events: list | None = None
    zone_keys: np.ndarray | None = None
    presence: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.travel = check_square_tensor(self.travel, "travel")
        self.horizon = check_count(self.horizon, "horizon", 1)
        N, _, P = self.travel.shape
        slots = np.arange(self.horizon) % P
        T = np.ascontiguousarray(self.travel.transpose(2, 0, 1)[slots])  # (H, N, N)
        self.travel_by_slot = T
        self.duration = np.maximum(1, np.ceil(T / self.dt)).astype(np.int64)
        self.t_eff = self.effective(T)
        if self.lam is not None:
            self.lam = check_square_tensor(self.lam, "lam")
            if self.lam.shape[0] != N:
                raise DataError("lam and travel disagree on the number of zones")
            self.lam_by_slot = np.ascontiguousarray(self.lam.transpose(2, 0, 1))
            self._sampler = None
        if self.zone_keys is None:
            self.zone_keys = np.arange(N, dtype=np.uint64)

    @property
    def n_zones(self):
        return self.travel.shape[0]

    def effective(self, minutes, t0=None):
        """Clamp trip minutes to the horizon; ``minutes`` is ``(H, ...)`` or
        scalar with an explicit 0-based slot ``t0``."""
        H, dt = self.horizon, self.dt
        if t0 is None:
            t1 = np.arange(1, H + 1).reshape((H,) + (1,) * (np.ndim(minutes) - 1))
        else:
            t1 = t0 + 1
        return np.where(t1 + np.ceil(minutes / dt) < H, minutes, (H - t1) * dt)

    def sampler(self) -> DemandSampler:
        if self.lam is None:
            raise DataError("context has no intensity tensor")
        if self._sampler is None:
            self._sampler = DemandSampler(self.lam, self.horizon)
        return self._sampler


@dataclass
class Metrics:
    trips: int = 0
    trip_time: float = 0.0
    relocations: int = 0
    reloc_time: float = 0.0
    transits: int = 0
    transit_time: float = 0.0
    conflicts: int = 0
    unmet_demand: int = 0

    def as_dict(self):
        return asdict(self)


METRIC_FIELDS = [f.name for f in fields(Metrics)]


@dataclass
class DecisionLog:
    """Sparse decisions: parallel arrays ``kind`` (0 = u_v, 1 = u_r, 2 = u_t),
    ``i``, ``j``, ``t`` (1-based slot) and ``count``."""

    kind: np.ndarray
    i: np.ndarray
    j: np.ndarray
    t: np.ndarray
    count: np.ndarray

    KINDS = ("u_v", "u_r", "u_t")

    @classmethod
    def from_parts(cls, parts) -> DecisionLog:
        if not parts:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z, z, z, z)
        arr = np.concatenate([np.asarray(p, dtype=np.int64).reshape(5, -1) for p in parts], axis=1)
        order = np.lexsort((arr[2], arr[1], arr[3], arr[0]))
        return cls(*arr[:, order])

    def select(self, kind: str):
        m = self.kind == self.KINDS.index(kind)
        return self.i[m], self.j[m], self.t[m], self.count[m]

    def __len__(self):
        return self.kind.size

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "i", "j", "t", "count"])
            for k, i, j, t, c in zip(self.kind, self.i, self.j, self.t, self.count):
                w.writerow([self.KINDS[k], i, j, t, c])

    @classmethod
    def read_csv(cls, path) -> DecisionLog:
        parts = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                parts.append([[cls.KINDS.index(r["kind"])], [int(r["i"])], [int(r["j"])],
                              [int(r["t"])], [int(r["count"])]])
        return cls.from_parts(parts)

    def equals(self, other) -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("kind", "i", "j", "t", "count"))


@dataclass
class SimResult:
    metrics: Metrics
    log: DecisionLog | None
    decision_time: float
    violations: int
    seed: int
    idle: np.ndarray | None = None  # (H, N) idle cars after client assignment


def score(log: DecisionLog, ctx: SimContext) -> float:
    """Total client trip time in hours under the horizon-clamped travel times."""
    i, j, t, n = log.select("u_v")
    return float((n * ctx.t_eff[t - 1, i, j]).sum() / 60.0)


class _Units:
    """Demand units of one scenario, sorted by slot, origin and hash priority."""

    def __init__(self, sc: Scenario, zone_keys):
        t = np.repeat(sc.demand_t, sc.demand_n)
        i = np.repeat(sc.demand_i, sc.demand_n)
        j = np.repeat(sc.demand_j, sc.demand_n)
        starts = np.repeat(np.cumsum(sc.demand_n) - sc.demand_n, sc.demand_n)
        m = np.arange(t.size) - starts
        key = priority_keys(sc.seed, t, i, j, m, zone_keys)
        order = np.lexsort((key, i, t))
        self.t, self.i, self.j = t[order], i[order], j[order]
        grp = self.t * sc.n_zones + self.i
        first = np.r_[0, np.flatnonzero(np.diff(grp)) + 1]
        sizes = np.diff(np.r_[first, grp.size])
        self.rank = np.arange(grp.size) - np.repeat(first, sizes)
        self.bounds = np.searchsorted(self.t, np.arange(sc.horizon + 1))


def _as_moves(decisions, N):
    """Normalize a policy's decisions to ``(src, dst, n)`` int arrays."""
    if decisions is None:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    if isinstance(decisions, tuple) and len(decisions) == 3 and isinstance(decisions[0], np.ndarray):
        src, dst, n = (np.asarray(a, dtype=np.int64) for a in decisions)
    else:
        arr = np.asarray(list(decisions), dtype=np.int64).reshape(-1, 3)
        src, dst, n = arr[:, 0], arr[:, 1], arr[:, 2]
    if ((src < 0) | (src >= N) | (dst < 0) | (dst >= N)).any():
        raise ValueError("decision references an unknown zone")
    if (src == dst).any():
        raise ValueError("relocations and transits must not target their source zone")
    if (n < 0).any():
        raise ValueError("negative decision count")
    keep = n > 0
    return src[keep], dst[keep], n[keep]


def _hours(table, i, j, n, N):
    """Sum of ``n * table[i, j]`` in hours, accumulated per sorted zone pair so
    the simulator and the replayer round identically."""
    key = i * N + j
    uniq, inv = np.unique(key, return_inverse=True)
    cnt = np.bincount(inv, weights=n)
    return float((cnt * table[uniq // N, uniq % N]).sum()) / 60.0


class _Engine:
    """State of one scenario run; shared by the simulator and the replayer."""

    def __init__(self, sc: Scenario, ctx: SimContext, scooter_factor=1.0):
        if sc.n_zones != ctx.n_zones:
            raise DataError(f"scenario has {sc.n_zones} zones, context {ctx.n_zones}")
        self.ctx, self.sc = ctx, sc
        N, H = ctx.n_zones, ctx.horizon
        self.N, self.H = N, H
        self.x_v = sc.x_v0.astype(np.int64).copy()
        self.x_s = sc.x_s0.astype(np.int64).copy()
        # row H collects arrivals that fall beyond the horizon
        self.arr_v = np.zeros((H + 1, N), dtype=np.int64)
        self.arr_s = np.zeros((H + 1, N), dtype=np.int64)
        self.intent = np.zeros((H + 1, N), dtype=np.int64)
        self.m = Metrics()
        self.parts = []
        self.fleet, self.staff = int(self.x_v.sum()), int(self.x_s.sum())
        self.scooter_factor = scooter_factor
        if scooter_factor == 1.0:
            self.transit_duration, self.transit_eff = ctx.duration, ctx.t_eff
        else:
            scaled = ctx.travel_by_slot * scooter_factor
            self.transit_duration = np.maximum(1, np.ceil(scaled / ctx.dt)).astype(np.int64)
            self.transit_eff = ctx.effective(scaled)

    def arrive(self, t):
        self.x_v += self.arr_v[t]
        self.x_s += self.arr_s[t]

    def depart_clients(self, t, si, sj, n=None):
        n = np.ones(si.size, dtype=np.int64) if n is None else n
        np.subtract.at(self.x_v, si, n)
        a = np.minimum(t + self.ctx.duration[t, si, sj], self.H)
        np.add.at(self.arr_v, (a, sj), n)
        self.m.trips += int(n.sum())
        self.m.trip_time += _hours(self.ctx.t_eff[t], si, sj, n, self.N)

    def count_conflicts(self, t):
        waiting = self.intent[t]
        if waiting.any():
            self.m.conflicts += int(waiting[self.x_v == 0].sum())

    def relocate(self, t, src, dst, n):
        cap = np.minimum(self.x_v, self.x_s)
        if (np.bincount(src, weights=n, minlength=self.N) > cap).any():
            raise ValueError(f"slot {t + 1}: relocations exceed min(idle cars, idle staff)")
        np.subtract.at(self.x_v, src, n)
        np.subtract.at(self.x_s, src, n)
        a = np.minimum(t + self.ctx.duration[t, src, dst], self.H)
        np.add.at(self.arr_v, (a, dst), n)
        np.add.at(self.arr_s, (a, dst), n)
        self.m.relocations += int(n.sum())
        self.m.reloc_time += _hours(self.ctx.t_eff[t], src, dst, n, self.N)

    def transit(self, t, src, dst, n):
        if (np.bincount(src, weights=n, minlength=self.N) > self.x_s).any():
            raise ValueError(f"slot {t + 1}: transits exceed idle staff")
        np.subtract.at(self.x_s, src, n)
        a = np.minimum(t + self.transit_duration[t, src, dst], self.H)
        np.add.at(self.arr_s, (a, dst), n)
        np.add.at(self.intent, (a, dst), n)
        self.m.transits += int(n.sum())
        self.m.transit_time += _hours(self.transit_eff[t], src, dst, n, self.N)

    def log(self, kind, t, i, j, n):
        if i.size:
            key = i * self.N + j
            uniq, inv = np.unique(key, return_inverse=True)
            cnt = np.bincount(inv, weights=n).astype(np.int64)
            self.parts.append([np.full(uniq.size, kind), uniq // self.N, uniq % self.N,
                               np.full(uniq.size, t + 1), cnt])

    def violations(self, t) -> int:
        bad = 0
        if self.x_v.sum() + self.arr_v[t + 1 :].sum() != self.fleet or (self.x_v < 0).any():
            bad += 1
        if self.x_s.sum() + self.arr_s[t + 1 :].sum() != self.staff or (self.x_s < 0).any():
            bad += 1
        return bad


def run_scenario(sc: Scenario, ctx: SimContext, policy=None, audit=False, record_log=True,
                 record_idle=False) -> SimResult:
    """Simulate one scenario over the context's horizon.

    Parameters
    ----------
    policy : object, optional
        Implements ``start(ctx, scenario)``, ``relocate(t, x_v, x_s)`` and
        ``transit(t, x_v, x_s)``; the latter two return ``(src, dst, count)``
        arrays or an iterable of triples. ``t`` is the 0-based slot.
    audit : bool
        Check vehicle and staff conservation after every stage of every slot;
        the number of failed checks is returned as ``violations``.
    record_idle : bool
        Keep the idle-car counts seen by the policy in every slot.
    """
    eng = _Engine(sc, ctx, getattr(policy, "scooter_factor", 1.0))
    units = _Units(sc, ctx.zone_keys)
    decision_time = 0.0
    bad = 0
    idle = np.zeros((ctx.horizon, eng.N), dtype=np.int64) if record_idle else None
    if policy is not None:
        policy.start(ctx, sc)
    for t in range(ctx.horizon):
        eng.arrive(t)
        lo, hi = units.bounds[t], units.bounds[t + 1]
        if hi > lo:
            ui, uj = units.i[lo:hi], units.j[lo:hi]
            served = units.rank[lo:hi] < eng.x_v[ui]
            si, sj = ui[served], uj[served]
            eng.m.unmet_demand += int(served.size - si.size)
            if si.size:
                eng.depart_clients(t, si, sj)
                if record_log:
                    eng.log(0, t, si, sj, np.ones(si.size, dtype=np.int64))
        eng.count_conflicts(t)
        if record_idle:
            idle[t] = eng.x_v
        if audit:
            bad += eng.violations(t)
        if policy is not None:
            tic = time.perf_counter()
            moves = _as_moves(policy.relocate(t, eng.x_v.copy(), eng.x_s.copy()), eng.N)
            decision_time += time.perf_counter() - tic
            if moves[0].size:
                eng.relocate(t, *moves)
                if record_log:
                    eng.log(1, t, *moves)
            tic = time.perf_counter()
            moves = _as_moves(policy.transit(t, eng.x_v.copy(), eng.x_s.copy()), eng.N)
            decision_time += time.perf_counter() - tic
            if moves[0].size:
                eng.transit(t, *moves)
                if record_log:
                    eng.log(2, t, *moves)
            if audit:
                bad += eng.violations(t)
    log = DecisionLog.from_parts(eng.parts) if record_log else None
    return SimResult(eng.m, log, decision_time, bad, sc.seed, idle)


def replay(log: DecisionLog, sc: Scenario, ctx: SimContext, scooter_factor=1.0) -> Metrics:
    """Re-execute logged decisions against a scenario, checking feasibility.

    Raises ``ValueError`` if any logged decision was infeasible (serving more
    clients than waiting or than idle cars, relocating more than available).
    """
    eng = _Engine(sc, ctx, scooter_factor)
    D = sc.dense()
    by_slot = [[[], [], []] for _ in range(ctx.horizon)]
    for k, i, j, t, n in zip(log.kind, log.i, log.j, log.t, log.count):
        if not 1 <= t <= ctx.horizon:
            raise ValueError(f"decision at slot {t} outside the horizon")
        by_slot[t - 1][k].append((i, j, n))
    total = int(sc.demand_n.sum())
    for t in range(ctx.horizon):
        eng.arrive(t)
        uv = np.asarray(by_slot[t][0], dtype=np.int64).reshape(-1, 3)
        if uv.size:
            si, sj, n = uv.T
            if (n > D[si, sj, t]).any():
                raise ValueError(f"slot {t + 1}: more clients served than waiting")
            if (np.bincount(si, weights=n, minlength=eng.N) > eng.x_v).any():
                raise ValueError(f"slot {t + 1}: more clients served than idle cars")
            eng.depart_clients(t, si, sj, n)
        eng.count_conflicts(t)
        for kind, apply in ((1, eng.relocate), (2, eng.transit)):
            mv = np.asarray(by_slot[t][kind], dtype=np.int64).reshape(-1, 3)
            if mv.size:
                apply(t, *mv.T)
    eng.m.unmet_demand = total - eng.m.trips
    return eng.m


@dataclass
class SAAResult:
    mean: float
    std: float
    results: list

    @property
    def metrics(self):
        return [r.metrics for r in self.results]

    def mean_of(self, name) -> float:
        return float(np.mean([getattr(r.metrics, name) for r in self.results]))

    @property
    def decision_times(self):
        return np.array([r.decision_time for r in self.results])


def scenario_batch(ctx: SimContext, n, fleet, staff, seed, presence=None, start=0):
    """Scenarios ``start .. start + n - 1`` of the seed stream ``seed``."""
    sampler = ctx.sampler()
    w = presence if presence is not None else ctx.presence
    return [sampler.sample(fleet, staff, w, scenario_seed(seed, k)) for k in range(start, start + n)]


def run_saa(ctx: SimContext, n, policy=None, fleet=300, staff=7, seed=0, presence=None,
            scenarios=None, record_log=False, audit=False) -> SAAResult:
    """Average total trip time over ``n`` sampled scenarios.

    Scenario ``k`` always uses seed ``scenario_seed(seed, k)``, so results for
    the first ``n`` scenarios do not depend on how many are run in total.
    Pass ``scenarios`` to reuse an already sampled batch.
    """
    n = check_count(n, "n", 1)
    if scenarios is None:
        scenarios = scenario_batch(ctx, n, fleet, staff, seed, presence)
    results = [run_scenario(sc, ctx, policy, audit=audit, record_log=record_log) for sc in scenarios[:n]]
    scores = np.array([r.metrics.trip_time for r in results])
    std = float(scores.std(ddof=1)) if n > 1 else 0.0
    return SAAResult(float(scores.mean()), std, results)


def write_metrics_csv(path, rows):
    """``rows``: iterable of ``(policy_id, SimResult)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "seed"] + METRIC_FIELDS)
        for pid, res in rows:
            m = res.metrics
            w.writerow([pid, res.seed] + [_fmt(getattr(m, f)) for f in METRIC_FIELDS])


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)

