"""Demand calibration and scenario sampling.

Tensors follow the ``(origin, destination, slot)`` layout: ``trips[i, j, t]``
is the average number of trips per day from zone ``i`` to ``j`` starting in
slot ``t``, ``activity[i, t]`` the average number of user interactions in
zone ``i`` during slot ``t`` and ``travel[i, j, t]`` the mean trip duration in
minutes. A slot lasts ``SLOT_MINUTES``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import DataError, check_count, check_positive, check_square_tensor, check_tensor
from .zoning import dtw

SLOT_MINUTES = 15.0
DEFAULT_DELTA = 15.0


def smooth_trips(trips) -> tuple[np.ndarray, float]:
    """Add ``alpha = 0.1 * min(positive entry)`` to every entry.

    Returns the smoothed tensor and ``alpha``.
    """
    tr = check_tensor(trips, "trips", ndim=3)
    pos = tr[tr > 0]
    if pos.size == 0:
        raise DataError("trip tensor has no positive entry; cannot smooth")
    alpha = 0.1 * float(pos.min())
    return tr + alpha, alpha


def calibrate_lambda(trips_smoothed, activity, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Distribute activity over destinations in proportion to observed trips.

    ``lam[i, j, t] = activity[i, t] / (delta * sum_j trips[i, j, t]) * trips[i, j, t]``,
    so each origin row sums to ``activity[i, t] / delta``.
    """
    tr = check_square_tensor(trips_smoothed, "trips")
    ac = check_tensor(activity, "activity", ndim=2)
    check_positive(delta, "delta")
    if ac.shape != (tr.shape[0], tr.shape[2]):
        raise DataError(f"activity shape {ac.shape} does not match trips {tr.shape}")
    rows = tr.sum(axis=1)
    if (rows <= 0).any():
        raise DataError("trip row sums must be positive; smooth the tensor first")
    return tr * (ac / (delta * rows))[:, None, :]


def _r2(y, pred):
    ss = ((y - y.mean()) ** 2).sum()
    if ss == 0:
        return math.nan
    return float(1.0 - ((y - pred) ** 2).sum() / ss)


def select_delta(activity_total, trips_total, candidates):
    """Similarity of ``trips_total`` and ``activity_total / delta`` per candidate.

    Returns a list of ``(delta, r2, dtw)`` rows; choosing among them is left to
    the caller. ``r2`` is NaN when the trips series is constant.
    """
    ac = np.asarray(activity_total, dtype=float).ravel()
    tr = np.asarray(trips_total, dtype=float).ravel()
    if ac.shape != tr.shape:
        raise DataError("activity and trips series must have the same length")
    out = []
    for d in candidates:
        check_positive(d, "delta")
        scaled = ac / d
        out.append((float(d), _r2(tr, scaled), dtw(tr, scaled)))
    return out


def effective_travel_time(travel, i, j, t, H, dt: float = SLOT_MINUTES) -> float:
    """Trip time counted by the score, clamped to the end of the horizon.

    ``t`` is 1-based. Returns ``travel[i, j, t-1]`` if the trip ends strictly
    before slot ``H``, otherwise ``(H - t) * dt``.
    """
    if not 1 <= t <= H:
        raise ValueError(f"slot {t} outside [1, {H}]")
    T = float(travel[i, j, (t - 1) % travel.shape[2]])
    if t + math.ceil(T / dt) < H:
        return T
    return (H - t) * dt


def effective_travel_table(travel, H, dt: float = SLOT_MINUTES) -> np.ndarray:
    """Vectorized :func:`effective_travel_time` for all ``(i, j)`` and slots ``1..H``.

    Returns shape ``(N, N, H)``; entry ``[..., t - 1]`` is for 1-based slot ``t``.
    """
    P = travel.shape[2]
    T = travel[:, :, np.arange(H) % P]
    t1 = np.arange(1, H + 1)
    inside = t1 + np.ceil(T / dt) < H
    return np.where(inside, T, (H - t1) * dt)


def impute_travel_times(travel, distances=None, speed_kmh: float = 25.0) -> np.ndarray:
    """Fill NaN travel times.

    Missing entries take the mean of the same ``(i, j)`` pair over all slots;
    pairs with no observation at all fall back to ``distances[i, j]`` (meters)
    divided by ``speed_kmh``.
    """
    T = np.array(travel, dtype=float)
    if T.ndim != 3:
        raise DataError("travel-time tensor must be 3-dimensional")
    miss = np.isnan(T)
    if not miss.any():
        return T
    with np.errstate(invalid="ignore"):
        pair_mean = np.nanmean(np.where(miss, np.nan, T), axis=2) if (~miss).any() else np.full(T.shape[:2], np.nan)
    T = np.where(miss, pair_mean[:, :, None], T)
    still = np.isnan(T)
    if still.any():
        if distances is None:
            raise DataError("travel times missing for whole pairs and no distance matrix given")
        fallback = np.asarray(distances, dtype=float) / (speed_kmh * 1000.0 / 60.0)
        T = np.where(still, fallback[:, :, None], T)
    if (T[np.isfinite(T)] < 0).any():
        raise DataError("negative travel time")
    return T


@dataclass
class Scenario:
    """One sampled day: sparse demand plus initial vehicle and staff positions.

    Demand is stored as parallel arrays ``(t, i, j, count)`` with ``t`` 0-based
    and sorted by ``(t, i, j)``; ``dense()`` materializes ``D[i, j, t]``.
    """

    n_zones: int
    horizon: int
    demand_t: np.ndarray
    demand_i: np.ndarray
    demand_j: np.ndarray
    demand_n: np.ndarray
    x_v0: np.ndarray
    x_s0: np.ndarray
    seed: int

    @property
    def fleet(self):
        return int(self.x_v0.sum())

    @property
    def staff(self):
        return int(self.x_s0.sum())

    def dense(self) -> np.ndarray:
        D = np.zeros((self.n_zones, self.n_zones, self.horizon), dtype=np.int64)
        np.add.at(D, (self.demand_i, self.demand_j, self.demand_t), self.demand_n)
        return D

    @classmethod
    def from_dense(cls, D, x_v0, x_s0, seed=0) -> Scenario:
        D = np.asarray(D, dtype=np.int64)
        if (D < 0).any():
            raise DataError("demand counts must be nonnegative")
        i, j, t = np.nonzero(D)
        order = np.lexsort((j, i, t))
        i, j, t = i[order], j[order], t[order]
        return cls(D.shape[0], D.shape[2], t.astype(np.int64), i.astype(np.int64), j.astype(np.int64),
                   D[i, j, t], np.asarray(x_v0, dtype=np.int64), np.asarray(x_s0, dtype=np.int64), int(seed))

    def with_staff(self, x_s0) -> Scenario:
        return Scenario(self.n_zones, self.horizon, self.demand_t, self.demand_i, self.demand_j,
                        self.demand_n, self.x_v0, np.asarray(x_s0, dtype=np.int64), self.seed)


def scenario_seed(base_seed: int, index: int) -> int:
    """Seed of scenario ``index`` derived from a base seed, order independent."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, np.uint64)[0])


class DemandSampler:
    """Samples scenarios from an intensity tensor.

    Each ``(i, j, t)`` count is Poisson with mean ``lam[i, j, t]``. Sampling is
    done by drawing the origin total ``Poisson(sum_j lam[i, j, t])`` and
    splitting it over destinations in proportion to ``lam`` (Poisson
    splitting), which gives the same joint law at a fraction of the cost when
    most cells are empty.
    """

    def __init__(self, lam, horizon: int | None = None):
        lam = check_square_tensor(lam, "lam")
        self.n_zones = lam.shape[0]
        self.horizon = horizon or lam.shape[2]
        slots = np.arange(self.horizon) % lam.shape[2]
        by_slot = np.ascontiguousarray(lam.transpose(2, 0, 1)[slots])  # (H, N, N)
        self.row_total = by_slot.sum(axis=2)  # (H, N)
        safe = np.where(self.row_total > 0, self.row_total, 1.0)
        cum = np.cumsum(by_slot, axis=2) / safe[:, :, None]
        cum[..., -1] = 1.0
        # one global sorted key per (t, i) row: row index plus cumulative share
        rows = np.arange(self.horizon * self.n_zones, dtype=float).reshape(self.horizon, self.n_zones, 1)
        self._keys = (rows + cum).ravel()

    def sample_demand(self, rng):
        N, H = self.n_zones, self.horizon
        totals = rng.poisson(self.row_total)  # (H, N)
        t, i = np.nonzero(totals)
        counts = totals[t, i]
        row = np.repeat(t * N + i, counts)
        u = rng.random(row.size)
        pos = np.searchsorted(self._keys, row + u, side="right")
        j = np.minimum(pos - row * N, N - 1)
        ut = row // N
        ui = row % N
        # aggregate units to (t, i, j) counts, sorted
        key = (ut * N + ui) * N + j
        uniq, n = np.unique(key, return_counts=True)
        return (uniq // (N * N)).astype(np.int64), ((uniq // N) % N).astype(np.int64), \
            (uniq % N).astype(np.int64), n.astype(np.int64)

    def sample(self, fleet: int, staff: int, presence_weights=None, seed: int = 0) -> Scenario:
        fleet = check_count(fleet, "fleet")
        staff = check_count(staff, "staff")
        rng = np.random.default_rng(seed)
        t, i, j, n = self.sample_demand(rng)
        N = self.n_zones
        w = np.ones(N) if presence_weights is None else np.asarray(presence_weights, dtype=float)
        if w.shape != (N,) or (w < 0).any() or w.sum() <= 0:
            raise DataError("presence weights must be N nonnegative values with a positive sum")
        x_v0 = rng.multinomial(fleet, w / w.sum())
        x_s0 = rng.multinomial(staff, np.full(N, 1.0 / N))
        return Scenario(N, self.horizon, t, i, j, n, x_v0.astype(np.int64), x_s0.astype(np.int64), int(seed))


def sample_scenario(lam, fleet, staff, presence_weights=None, seed=0, horizon=None) -> Scenario:
    return DemandSampler(lam, horizon).sample(fleet, staff, presence_weights, seed)


# --- file formats -----------------------------------------------------------------


def write_tensor_csv(path, tensor):
    """Long-format CSV: ``i,j,t,value`` for 3-D tensors, ``i,t,value`` for 2-D."""
    arr = np.asarray(tensor, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if arr.ndim == 3:
            w.writerow(["i", "j", "t", "value"])
            for (i, j, t), v in np.ndenumerate(arr):
                if not np.isnan(v):
                    w.writerow([i, j, t, repr(float(v))])
        elif arr.ndim == 2:
            w.writerow(["i", "t", "value"])
            for (i, t), v in np.ndenumerate(arr):
                if not np.isnan(v):
                    w.writerow([i, t, repr(float(v))])
        else:
            raise DataError("only 2-D and 3-D tensors can be written")


def read_tensor_csv(path, shape=None, fill=np.nan) -> np.ndarray:
    """Read a long-format CSV; absent entries take ``fill`` (NaN marks a gap)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    ndim = len(header) - 1
    if ndim not in (2, 3):
        raise DataError(f"{path}: unexpected header {header}")
    idx = np.array([[int(v) for v in r[:-1]] for r in rows], dtype=np.int64).reshape(-1, ndim)
    vals = np.array([float(r[-1]) for r in rows])
    if shape is None:
        shape = tuple(idx.max(axis=0) + 1) if len(rows) else (0,) * ndim
    out = np.full(shape, fill, dtype=float)
    out[tuple(idx.T)] = vals
    return out


def dump_scenario(path, sc: Scenario):
    obj = {
        "seed": sc.seed,
        "n_zones": sc.n_zones,
        "horizon": sc.horizon,
        "D": [[int(i), int(j), int(t), int(n)] for t, i, j, n in
              zip(sc.demand_t, sc.demand_i, sc.demand_j, sc.demand_n)],
        "x_v0": sc.x_v0.tolist(),
        "x_s0": sc.x_s0.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        obj = json.load(fh)
    N, H = obj["n_zones"], obj["horizon"]
    D = np.zeros((N, N, H), dtype=np.int64)
    for i, j, t, n in obj["D"]:
        D[i, j, t] += n
    return Scenario.from_dense(D, obj["x_v0"], obj["x_s0"], obj["seed"])
