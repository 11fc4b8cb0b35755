"""Agglomerative zoning of hexagonal cells under a five-part weighted distance.

Clusters are merged greedily, closest pair first, subject to a maximum zone
size. The distance between two clusters is a weighted sum of

* ``rd``   single-linkage road distance over adjacent cell pairs,
* ``dns``  absolute difference of road densities,
* ``sh``   Ward linkage cost of the two centroids (compactness),
* ``cars`` DTW distance between the daily vehicle-count profiles,
* ``act``  DTW distance between the daily user-activity profiles,

each divided by its maximum over the initial adjacent pairs so the weights are
comparable. After every merge, clusters completely enclosed by another cluster
are absorbed into it.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import DataError, check_count
from .hexgrid import HexGrid, RoadGraph, adjacent_road_distances
from .predictors import fit_linear, lag_matrix, regression_scores

COMPONENTS = ("rd", "dns", "sh", "cars", "act")


@numba.njit(cache=True)
def _dtw(x, y):
    n, m = x.size, y.size
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(1, n + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(x[i - 1] - y[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw(x, y) -> float:
    """Unconstrained dynamic time warping distance with absolute-difference cost."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("dtw requires nonempty series")
    return float(_dtw(x, y))


@dataclass(frozen=True)
class DistanceWeights:
    w_rd: float = 2.0
    w_dns: float = 1.0
    w_sh: float = 1.0
    w_cars: float = 1.0
    w_act: float = 1.0

    def __post_init__(self):
        vals = self.as_array()
        if (vals < 0).any() or not np.isfinite(vals).all():
            raise ValueError("distance weights must be finite and nonnegative")
        if not (vals > 0).any():
            raise ValueError("at least one distance weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_rd, self.w_dns, self.w_sh, self.w_cars, self.w_act], dtype=float)


@dataclass
class Cluster:
    members: frozenset
    centroid: tuple
    road_density: float
    car_series: np.ndarray
    act_series: np.ndarray

    @property
    def size(self):
        return len(self.members)


@dataclass
class CellFeatures:
    """Per-cell inputs to zoning, aligned with ``grid.cells`` order.

    ``road_density`` is meters of road per cell; ``car_series`` and
    ``act_series`` have shape ``(n_cells, P)``. ``rd_pairs`` maps adjacent
    ``(id_a, id_b)`` with ``id_a < id_b`` to the road distance between their
    anchors; it is computed from ``road_graph`` when omitted.
    """

    grid: HexGrid
    road_density: np.ndarray
    car_series: np.ndarray
    act_series: np.ndarray
    road_graph: RoadGraph | None = None
    rd_pairs: dict | None = None

    def __post_init__(self):
        n = len(self.grid)
        self.road_density = np.asarray(self.road_density, dtype=float).reshape(n)
        self.car_series = np.asarray(self.car_series, dtype=float).reshape(n, -1)
        self.act_series = np.asarray(self.act_series, dtype=float).reshape(n, -1)
        if self.rd_pairs is None:
            if self.road_graph is None:
                raise DataError("either road_graph or rd_pairs is required")
            self.rd_pairs = adjacent_road_distances(self.grid, self.road_graph)

    def cluster(self, positions) -> Cluster:
        pos = np.asarray(sorted(positions))
        centers = self.grid.centers()[pos]
        return Cluster(
            members=frozenset(self.grid.cells[k].id for k in pos),
            centroid=tuple(centers.mean(axis=0)),
            road_density=float(self.road_density[pos].mean()),
            car_series=self.car_series[pos].mean(axis=0),
            act_series=self.act_series[pos].mean(axis=0),
        )


@dataclass
class ZoningResult:
    zones: list
    zone_of: dict
    max_size: int
    merge_trace: list

    @property
    def n_zones(self):
        return len(self.zones)

    def labels(self, grid: HexGrid) -> np.ndarray:
        return np.array([self.zone_of[c.id] for c in grid.cells])


def ward_cost(n_a, mu_a, n_b, mu_b) -> float:
    d2 = (mu_a[0] - mu_b[0]) ** 2 + (mu_a[1] - mu_b[1]) ** 2
    return n_a * n_b / (n_a + n_b) * d2


def component_distances(a: Cluster, b: Cluster, grid: HexGrid, rd_pairs: dict) -> np.ndarray:
    """The five raw component distances between two disjoint clusters.

    ``rd_pairs`` holds road distances of adjacent cell pairs (see
    :func:`fleetreloc.hexgrid.adjacent_road_distances`); the road component is
    their minimum over cross pairs, or infinity if the clusters do not touch.
    """
    rd = math.inf
    for cid in a.members:
        for n in grid.cell(cid).neighbor_ids:
            if n in b.members:
                rd = min(rd, rd_pairs.get((min(cid, n), max(cid, n)), math.inf))
    return np.array([
        rd,
        abs(a.road_density - b.road_density),
        ward_cost(a.size, a.centroid, b.size, b.centroid),
        dtw(a.car_series, b.car_series),
        dtw(a.act_series, b.act_series),
    ])


def normalize(values) -> np.ndarray:
    """Divide finite entries by the largest finite entry; infinities are kept."""
    arr = np.asarray(values, dtype=float)
    finite = np.isfinite(arr)
    if not finite.any():
        raise ValueError("cannot normalize: no finite entries")
    top = arr[finite].max()
    out = arr.copy()
    # an all-zero component stays zero rather than dividing by zero
    out[finite] = arr[finite] / top if top > 0 else 0.0
    return out


def _scales(raw: np.ndarray) -> np.ndarray:
    # per-component divisor: max finite value over the initial candidate pairs
    scales = np.ones(raw.shape[1])
    for k in range(raw.shape[1]):
        col = raw[:, k][np.isfinite(raw[:, k])]
        if col.size and col.max() > 0:
            scales[k] = col.max()
    return scales


def _combine(raw, weights, scales) -> float:
    total = 0.0
    for k in range(5):
        if weights[k] == 0:
            continue
        if not math.isfinite(raw[k]):
            return math.inf
        total += weights[k] * raw[k] / scales[k]
    return total


def _is_boundary(grid: HexGrid, cid) -> bool:
    return len(grid.cell(cid).neighbor_ids) < 6


def contains(a: Cluster, b: Cluster, grid: HexGrid) -> bool:
    """True when ``b`` is enclosed by ``a``: every neighbor of every cell of ``b``
    lies in ``a`` or ``b``, and no cell of ``b`` touches the edge of the grid."""
    for cid in b.members:
        if _is_boundary(grid, cid):
            return False
        for n in grid.cell(cid).neighbor_ids:
            if n not in b.members and n not in a.members:
                return False
    return True


class _State:
    """Mutable bookkeeping for one clustering run, keyed by cluster id."""

    def __init__(self, features: CellFeatures, weights, max_size, all_pairs):
        self.f = features
        self.grid = features.grid
        self.w = weights
        self.max_size = max_size
        self.pos = {c.id: k for k, c in enumerate(self.grid.cells)}
        self.clusters = {c.id: features.cluster([k]) for k, c in enumerate(self.grid.cells)}
        self.version = {cid: 0 for cid in self.clusters}
        # single-linkage road distance between touching clusters
        self.rd = {}
        self.adj = {cid: set() for cid in self.clusters}
        for c in self.grid.cells:
            for n in c.neighbor_ids:
                self.adj[c.id].add(n)
                key = (min(c.id, n), max(c.id, n))
                self.rd[key] = features.rd_pairs.get(key, math.inf)
        self.all_pairs = all_pairs

    def candidates(self, cid):
        if self.all_pairs:
            return [k for k in self.clusters if k != cid]
        return list(self.adj[cid])

    def raw(self, a, b) -> np.ndarray:
        ca, cb = self.clusters[a], self.clusters[b]
        w = self.w
        return np.array([
            self.rd.get((min(a, b), max(a, b)), math.inf),
            abs(ca.road_density - cb.road_density) if w[1] else 0.0,
            ward_cost(ca.size, ca.centroid, cb.size, cb.centroid) if w[2] else 0.0,
            dtw(ca.car_series, cb.car_series) if w[3] else 0.0,
            dtw(ca.act_series, cb.act_series) if w[4] else 0.0,
        ])

    def merge(self, a, b):
        """Merge ``b`` into ``a`` (``a < b``); returns the surviving id."""
        members = self.clusters[a].members | self.clusters[b].members
        self.clusters[a] = self.f.cluster([self.pos[m] for m in members])
        del self.clusters[b]
        self.version[a] += 1
        self.version[b] += 1
        self.adj[a] |= self.adj.pop(b)
        self.adj[a] -= {a, b}
        for k in self.adj[a]:
            self.adj[k].discard(b)
            self.adj[k].add(a)
            ka, kb = (min(a, k), max(a, k)), (min(b, k), max(b, k))
            self.rd[ka] = min(self.rd.get(ka, math.inf), self.rd.pop(kb, math.inf))
        self.rd.pop((a, b), None)
        return a

    def enclosed_by(self, cid):
        """Id of the single cluster surrounding ``cid``, or None."""
        nbrs = self.adj[cid]
        if len(nbrs) != 1:
            return None
        (outer,) = nbrs
        if contains(self.clusters[outer], self.clusters[cid], self.grid):
            return outer
        return None


def agglomerative_cluster(features: CellFeatures, weights: DistanceWeights, max_size: int,
                          all_pairs: bool | None = None) -> ZoningResult:
    """Greedy closest-pair merging under a size cap with enclosure absorption.

    Parameters
    ----------
    features : CellFeatures
    weights : DistanceWeights
    max_size : int
        Largest zone (in cells) a regular merge may produce.
    all_pairs : bool, optional
        Consider every pair of clusters rather than only touching ones. Defaults
        to True only when the road weight is zero (non-touching pairs have an
        infinite road distance otherwise). Quadratic in the number of cells.

    Returns
    -------
    ZoningResult
        ``merge_trace`` lists ``(distance, a, b)`` of every regular merge.
    """
    max_size = check_count(max_size, "max_size", 1)
    w = weights.as_array()
    if all_pairs is None:
        all_pairs = w[0] == 0
    st = _State(features, w, max_size, all_pairs)

    ids = sorted(st.clusters)
    pairs = [(a, b) for a in ids for b in st.candidates(a) if a < b]
    raw = np.array([st.raw(a, b) for a, b in pairs]).reshape(-1, 5)
    scales = _scales(raw) if len(pairs) else np.ones(5)
    heap = []
    for (a, b), r in zip(pairs, raw):
        d = _combine(r, w, scales)
        if math.isfinite(d) and st.clusters[a].size + st.clusters[b].size <= max_size:
            heap.append((d, a, b, 0, 0))
    heapq.heapify(heap)

    trace = []
    while heap:
        d, a, b, va, vb = heapq.heappop(heap)
        if a not in st.clusters or b not in st.clusters or st.version[a] != va or st.version[b] != vb:
            continue
        trace.append((d, a, b))
        c = st.merge(a, b)
        # enclosure absorption, repeated until nothing changes
        changed = True
        while changed:
            changed = False
            for k in sorted(st.adj[c]):
                if st.enclosed_by(k) == c:
                    c = st.merge(min(c, k), max(c, k))
                    changed = True
                    break
            if not changed:
                outer = st.enclosed_by(c)
                if outer is not None:
                    c = st.merge(min(c, outer), max(c, outer))
                    changed = True
        size_c = st.clusters[c].size
        for k in st.candidates(c):
            if size_c + st.clusters[k].size > max_size:
                continue
            dk = _combine(st.raw(c, k), w, scales)
            if math.isfinite(dk):
                lo, hi = min(c, k), max(c, k)
                heapq.heappush(heap, (dk, lo, hi, st.version[lo], st.version[hi]))

    order = sorted(st.clusters)
    zones = [st.clusters[k] for k in order]
    zone_of = {cid: z for z, cl in enumerate(zones) for cid in cl.members}
    return ZoningResult(zones, zone_of, max_size, trace)


class ZoningClusterer(BaseEstimator, ClusterMixin):
    """Estimator wrapper around :func:`agglomerative_cluster`.

    ``fit(features)`` sets ``labels_`` (zone index per cell, grid order),
    ``zones_`` and ``merge_trace_``.
    """

    def __init__(self, weights=(2.0, 1.0, 1.0, 1.0, 1.0), max_size=20, all_pairs=None):
        self.weights = weights
        self.max_size = max_size
        self.all_pairs = all_pairs

    def fit(self, X: CellFeatures, y=None):
        w = self.weights if isinstance(self.weights, DistanceWeights) else DistanceWeights(*self.weights)
        res = agglomerative_cluster(X, w, self.max_size, self.all_pairs)
        self.result_ = res
        self.zones_ = res.zones
        self.merge_trace_ = res.merge_trace
        self.labels_ = res.labels(X.grid)
        self.n_zones_ = res.n_zones
        return self


def tune_max_size(features: CellFeatures, weights: DistanceWeights, target_zones: int,
                  lo: int = 2, hi: int | None = None) -> ZoningResult:
    """Bisect the size cap until the zone count is as close as possible to the target."""
    hi = hi or len(features.grid)
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        res = agglomerative_cluster(features, weights, mid)
        if best is None or abs(res.n_zones - target_zones) < abs(best.n_zones - target_zones):
            best = res
        if res.n_zones > target_zones:
            lo = mid + 1
        elif res.n_zones < target_zones:
            hi = mid - 1
        else:
            break
    return best


# --- validation by availability predictability -----------------------------------


def validate_zoning(zr: ZoningResult | None, car_series_per_zone, horizons=(3, 6), window: int = 672,
                    penalty: str = "l1", strength: float = 1.0, train_frac: float = 0.7):
    """Score how predictable each zone's vehicle count is.

    For every zone and horizon a sparse linear autoregressor is fitted on the
    first ``train_frac`` of the series and scored on the remainder.

    Parameters
    ----------
    zr : ZoningResult or None
        Only used to check the zone count.
    car_series_per_zone : array_like of shape (length, n_zones)

    Returns
    -------
    rows : list of dict
        One row per (zone, horizon) with r2, mse, rmse, maxe, med, mae; zones
        with a constant series are reported with ``skipped=True``.
    summary : dict
        ``{horizon: {metric: (mean, std, median)}}`` over non-skipped zones.
    """
    series = np.asarray(car_series_per_zone, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if zr is not None and series.shape[1] != zr.n_zones:
        raise DataError(f"expected {zr.n_zones} zone series, got {series.shape[1]}")
    split = int(round(train_frac * series.shape[0]))
    rows = []
    for h in horizons:
        if split < window + h + 1 or series.shape[0] - split < 1:
            raise ValueError(f"series of length {series.shape[0]} too short for window={window}, horizon={h}")
        for z in range(series.shape[1]):
            x = series[:, z]
            if np.ptp(x) == 0:
                rows.append({"zone": z, "horizon": h, "skipped": True})
                continue
            coef = fit_linear(x[:split], window, h, penalty, strength)
            X, y = lag_matrix(x, window, h)
            target_idx = np.arange(window - 1 + h, window - 1 + h + y.size)
            test = target_idx >= split
            pred = coef[0] + X[test] @ coef[1:]
            scores = regression_scores(y[test], pred)
            rows.append({"zone": z, "horizon": h, "skipped": False, **scores})
    summary = {}
    for h in horizons:
        kept = [r for r in rows if r["horizon"] == h and not r["skipped"] and math.isfinite(r["r2"])]
        summary[h] = {
            m: (float(np.mean(v)), float(np.std(v)), float(np.median(v)))
            for m in ("r2", "mse", "rmse", "maxe", "med", "mae")
            for v in [[r[m] for r in kept] or [math.nan]]
        }
    return rows, summary


# --- file formats -----------------------------------------------------------------


def write_zones(csv_path, json_path, zr: ZoningResult):
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "zone_id"])
        for cid in sorted(zr.zone_of):
            w.writerow([cid, zr.zone_of[cid]])
    if json_path is not None:
        summary = [
            {"zone_id": z, "size": cl.size, "centroid": [float(v) for v in cl.centroid],
             "density": cl.road_density}
            for z, cl in enumerate(zr.zones)
        ]
        with open(json_path, "w") as fh:
            json.dump({"max_size": zr.max_size, "zones": summary}, fh, indent=1)


def read_zone_map(csv_path) -> dict:
    with open(csv_path, newline="") as fh:
        return {int(r["cell_id"]): int(r["zone_id"]) for r in csv.DictReader(fh)}


def write_validation(path, rows):
    fields = ["zone", "horizon", "r2", "mse", "rmse", "maxe", "med", "mae"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            if r["skipped"]:
                w.writerow([r["zone"], r["horizon"]] + ["skipped"] * 6)
            else:
                w.writerow([r["zone"], r["horizon"]] + [f"{r[k]:.6g}" for k in fields[2:]])
