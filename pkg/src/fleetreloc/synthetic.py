"""Synthetic city generators standing in for proprietary operator data.

Two generators are provided:

``generate_zone_dataset``
    Zone-level tensors (trips, activity, travel times, presence weights and a
    vehicle-count history) for benchmark harnesses that start from zones.

``generate_cell_city``
    A hexagonal-cell city with a road graph and planted land-use types whose
    daily rhythms differ, used to compare zoning methods. Cell-level trip
    flows are kept in factorized form and only materialized per zone.

Both follow a gravity model: the flow from ``i`` to ``j`` in slot ``t`` is
proportional to ``A_i(t) * B_j(t) * exp(-d_ij / L)`` where ``A`` and ``B`` mix
a residential and a business daily profile, so mornings pull cars towards the
center and evenings push them back out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import DEFAULT_DELTA, SLOT_MINUTES, calibrate_lambda, smooth_trips

P = 96


def _bump(center_h, width_h):
    t = (np.arange(P) + 0.5) * SLOT_MINUTES / 60.0
    d = (t - center_h + 12) % 24 - 12
    return np.exp(-0.5 * (d / width_h) ** 2)


def daily_profiles():
    """Residential-origin and business-origin activity shapes (length 96).

    ``home`` peaks in the morning (people leave home) and weakly in the
    evening; ``work`` peaks in the late afternoon. Both share a daytime floor
    and a quiet night.
    """
    floor = 0.15 + 0.6 * _bump(13.5, 4.0)
    night = 0.03
    home = night + floor * 0.5 + 1.6 * _bump(7.75, 1.2) + 0.5 * _bump(19.5, 1.5)
    work = night + floor * 0.5 + 0.3 * _bump(8.5, 1.0) + 1.6 * _bump(17.0, 1.4)
    return home, work


def rush_multiplier():
    """Travel-time inflation by slot: 1 at night, up to ~1.5 in rush hours."""
    return 1.0 + 0.5 * np.maximum(_bump(8.0, 1.0), _bump(17.0, 1.2))


@dataclass
class SyntheticSpec:
    n_zones: int = 63
    radius_m: float = 7000.0
    daily_trips: float = 1700.0
    decay_m: float = 3000.0
    speed_kmh: float = 26.0
    detour: float = 1.3
    access_min: float = 6.0
    delta: float = DEFAULT_DELTA
    activity_noise: float = 0.04
    attractiveness_shape: float = 2.0
    sink_sigma: float = 0.6
    fleet: int = 300
    history_days: int = 14
    seed: int = 0


@dataclass
class ZoneDataset:
    trips: np.ndarray  # (N, N, P) average trips per day
    activity: np.ndarray  # (N, P)
    travel: np.ndarray  # (N, N, P) minutes
    presence: np.ndarray  # (N,)
    coords: np.ndarray  # (N, 2) meters
    spec: SyntheticSpec

    def lam(self, delta=None):
        tr, _ = smooth_trips(self.trips)
        return calibrate_lambda(tr, self.activity, self.spec.delta if delta is None else delta)


def gravity_trips(coords, home_w, work_w, daily_trips, decay_m, profiles=None, out_w=None, in_w=None):
    """Trip tensor ``(N, N, P)`` from origin/destination weights and distance decay.

    ``home_w`` and ``work_w`` are per-zone residential and business weights.
    Origins in the morning are weighted by residential mass and destinations by
    business mass; the roles swap in the evening.
    """
    home, work = daily_profiles() if profiles is None else profiles
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    F = np.exp(-d / decay_m)
    # origin weight: residential zones emit on the home profile, business on work
    A = home_w[:, None] * home[None, :] + work_w[:, None] * work[None, :]  # (N, P)
    # destination weight: the opposite mass receives
    B = work_w[:, None] * home[None, :] + home_w[:, None] * work[None, :]
    if out_w is not None:
        A = A * out_w[:, None]
    if in_w is not None:
        B = B * in_w[:, None]
    raw = A[:, None, :] * B[None, :, :] * F[:, :, None]
    return raw * (daily_trips / raw.sum())


def travel_minutes(dist_m, speed_kmh, detour, access_min):
    """``(N, N, P)`` travel times from a distance matrix with rush-hour inflation."""
    base = dist_m * detour / (speed_kmh * 1000.0 / 60.0)
    return access_min + base[:, :, None] * rush_multiplier()[None, None, :]


def generate_zone_dataset(spec: SyntheticSpec = SyntheticSpec()) -> ZoneDataset:
    """Zone-level synthetic instance.

    Zones are scattered in a disc. Business weight falls off with distance
    from the center, residential weight peaks in a ring; both carry heavy
    tailed (gamma) multipliers. Activity equals ``delta`` times the trips
    leaving each zone, up to multiplicative noise.
    """
    rng = np.random.default_rng(spec.seed)
    N = spec.n_zones
    r = spec.radius_m * np.sqrt(rng.random(N))
    phi = rng.uniform(0, 2 * np.pi, N)
    coords = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    rel = r / spec.radius_m
    g = spec.attractiveness_shape
    work_w = np.exp(-((rel / 0.35) ** 2)) * rng.gamma(g, 1 / g, N) + 0.03
    home_w = (0.25 + np.exp(-(((rel - 0.65) / 0.25) ** 2))) * rng.gamma(g, 1 / g, N)
    # independent origin/destination propensities make some zones net sinks
    # where cars pile up and others net sources that run dry
    out_w = rng.lognormal(0.0, spec.sink_sigma, N)
    in_w = rng.lognormal(0.0, spec.sink_sigma, N)
    trips = gravity_trips(coords, home_w, work_w, spec.daily_trips, spec.decay_m, out_w=out_w, in_w=in_w)
    noise = rng.lognormal(0.0, spec.activity_noise, (N, P))
    activity = spec.delta * trips.sum(axis=1) * noise
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    travel = travel_minutes(dist, spec.speed_kmh, spec.detour, spec.access_min)
    # cars rest overnight where people live
    presence = home_w / home_w.sum()
    return ZoneDataset(trips, activity, travel, presence, coords, spec)


def zone_history(ds: ZoneDataset, days=None, staff=0, seed=None):
    """Idle-car history and demand event times from simulated days without relocation.

    Every day is an independent scenario of the instance, so the history is
    a concatenation of ``days`` daily trajectories of shape ``(days * 96, N)``.
    Events are the requested departure slots per origin zone, jittered
    uniformly inside their slot.
    """
    from .sim import SimContext, run_scenario, scenario_batch

    spec = ds.spec
    days = spec.history_days if days is None else days
    seed = spec.seed + 1 if seed is None else seed
    ctx = SimContext(ds.travel, P, lam=ds.lam(), presence=ds.presence)
    scs = scenario_batch(ctx, days, spec.fleet, staff, seed)
    hist = np.concatenate([run_scenario(sc, ctx, record_log=False, record_idle=True).idle for sc in scs])
    rng = np.random.default_rng(seed)
    N = spec.n_zones
    parts = [[] for _ in range(N)]
    for sc in scs:
        t = np.repeat(sc.demand_t, sc.demand_n)
        i = np.repeat(sc.demand_i, sc.demand_n)
        jit = t + rng.random(t.size)
        for k in range(N):
            parts[k].append(jit[i == k])
    events = [np.sort(np.concatenate(p)) if p else np.zeros(0) for p in parts]
    return hist.astype(float), events


# --- cell-level city ------------------------------------------------------------

LAND_USES = ("residential", "business", "leisure", "quiet")


def land_use_profiles():
    """Origin and destination daily shapes per land use, each ``(4, 96)``."""
    home, work = daily_profiles()
    night = _bump(23.5, 1.5) + 0.6 * _bump(1.5, 1.2)
    evening = _bump(19.0, 1.5)
    flat = np.full(P, 0.35) + 0.3 * _bump(13.0, 4.0)
    origin = np.stack([home, work, 0.05 + 1.3 * night + 0.3 * evening, flat])
    dest = np.stack([work, home, 0.05 + 1.4 * evening + 0.2 * night, flat])
    return origin, dest


@dataclass
class CitySpec:
    radius_m: float = 6000.0
    side_m: float = 210.0
    n_patches: int = 20
    patch_width_m: float = 650.0
    mass: tuple = (1.0, 1.2, 0.8, 0.35)
    road_density: tuple = (9.0, 14.0, 11.0, 5.0)  # km of road per cell
    river_width_m: float = 350.0
    bridges: int = 3
    daily_trips: float = 1700.0
    decay_m: float = 3000.0
    speed_kmh: float = 26.0
    access_min: float = 6.0
    sink_sigma: float = 0.6
    cell_noise: float = 0.1
    delta: float = DEFAULT_DELTA
    fleet: int = 300
    seed: int = 0


@dataclass
class CellCity:
    grid: object  # HexGrid
    land_use: np.ndarray  # (C,) index into LAND_USES
    road_density: np.ndarray  # (C,)
    road_edges: list  # (ax, ay, bx, by, length)
    road_dist: np.ndarray  # (C, C) meters
    origin: np.ndarray  # (C, P) origin weights a_c(t)
    dest: np.ndarray  # (C, P) destination weights b_c(t)
    decay: np.ndarray  # (C, C) exp(-d / L)
    scale: float  # trips per unit of a F b
    car_series: np.ndarray  # (C, P)
    act_series: np.ndarray  # (C, P)
    presence: np.ndarray  # (C,) overnight car share
    spec: CitySpec

    def features(self):
        from .hexgrid import RoadGraph, adjacent_road_distances
        from .zoning import CellFeatures

        g = RoadGraph.from_edges(self.road_edges, self.grid)
        return CellFeatures(self.grid, self.road_density, self.car_series, self.act_series,
                            road_graph=g, rd_pairs=adjacent_road_distances(self.grid, g))

    def zone_dataset(self, labels, rng_seed=0) -> ZoneDataset:
        """Aggregate the cell city onto a partition given as one label per cell."""
        labels = np.asarray(labels)
        _, lab = np.unique(labels, return_inverse=True)
        Z = lab.max() + 1
        C = lab.size
        M = np.zeros((C, Z))
        M[np.arange(C), lab] = 1.0
        trips = np.empty((Z, Z, P))
        for t in range(P):
            left = np.ascontiguousarray(M.T * self.origin[:, t])  # (Z, C)
            trips[:, :, t] = (left @ self.decay) @ (self.dest[:, t, None] * M)
        trips *= self.scale
        centers = self.grid.centers()
        rep = np.empty(Z, dtype=np.int64)
        for z in range(Z):
            idx = np.flatnonzero(lab == z)
            c = centers[idx].mean(axis=0)
            rep[z] = idx[np.argmin(np.linalg.norm(centers[idx] - c, axis=1))]
        dist = self.road_dist[np.ix_(rep, rep)].copy()
        for z in range(Z):
            idx = np.flatnonzero(lab == z)
            dist[z, z] = 2.0 * self.road_dist[idx, rep[z]].mean()
        sp_ = self.spec
        travel = travel_minutes(dist, sp_.speed_kmh, 1.0, sp_.access_min)
        rng = np.random.default_rng(rng_seed)
        activity = sp_.delta * trips.sum(axis=1) * rng.lognormal(0.0, 0.04, (Z, P))
        presence = M.T @ self.presence
        zspec = SyntheticSpec(n_zones=Z, daily_trips=sp_.daily_trips, delta=sp_.delta, fleet=sp_.fleet,
                              sink_sigma=sp_.sink_sigma, seed=sp_.seed)
        coords = centers[rep]
        return ZoneDataset(trips, activity, travel, presence / presence.sum(), coords, zspec)


def _river_y(x, spec):
    return 0.15 * spec.radius_m + 0.12 * spec.radius_m * np.sin(x / spec.radius_m * 2.2)


def generate_cell_city(spec: CitySpec = CitySpec()) -> CellCity:
    """Hexagonal city with irregular land-use patches, a river and bridges.

    Land use comes from the strongest of several Gaussian "patch" fields per
    type, which gives irregular, non-convex districts. Each district draws
    its own origin and destination propensities (sinks and sources), and
    cells inside it differ only by ``cell_noise``. Road edges join the
    centers of adjacent cells with a small random detour, except across the
    river where only a few bridges exist. Cell flows follow the gravity model
    with land-use specific origin and destination rhythms; per-cell car
    counts integrate the expected net inflow over the day.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    from .hexgrid import tessellate

    rng = np.random.default_rng(spec.seed)
    phi = np.linspace(0, 2 * np.pi, 73)[:-1]
    poly = np.column_stack([spec.radius_m * np.cos(phi), spec.radius_m * np.sin(phi)])
    grid = tessellate(poly, spec.side_m)
    xy = grid.centers()
    C = len(grid)
    K = len(LAND_USES)
    field_ = np.zeros((K, C))
    patch_of = np.zeros((K, C), dtype=np.int64)
    for k in range(K):
        n = spec.n_patches
        r = spec.radius_m * np.sqrt(rng.random(n))
        a = rng.uniform(0, 2 * np.pi, n)
        ctr = np.column_stack([r * np.cos(a), r * np.sin(a)])
        wid = spec.patch_width_m * rng.uniform(0.6, 1.4, n)
        amp = rng.uniform(0.6, 1.0, n)
        d2 = ((xy[None, :, :] - ctr[:, None, :]) ** 2).sum(axis=2)
        contrib = amp[:, None] * np.exp(-0.5 * d2 / wid[:, None] ** 2)
        field_[k] = contrib.sum(axis=0)
        patch_of[k] = k * n + contrib.argmax(axis=0)
    # business concentrates downtown, quiet land on the outskirts
    rel = np.linalg.norm(xy, axis=1) / spec.radius_m
    field_[1] *= 1.4 * np.exp(-((rel / 0.5) ** 2)) + 0.3
    field_[3] *= 0.5 + rel
    land = field_.argmax(axis=0)
    patch = patch_of[land, np.arange(C)]

    dens = np.asarray(spec.road_density)[land] * rng.lognormal(0, 0.1, C)

    # roads: adjacent centers, cut by the river except at bridges
    side = lambda p: np.sign(p[..., 1] - _river_y(p[..., 0], spec))
    bridge_x = np.linspace(-0.6, 0.6, spec.bridges) * spec.radius_m if spec.bridges else np.zeros(0)
    pos = {c.id: k for k, c in enumerate(grid.cells)}
    edges, ei, ej, ew = [], [], [], []
    for c in grid.cells:
        a = pos[c.id]
        for nid in c.neighbor_ids:
            b = pos[nid]
            if b <= a:
                continue
            pa, pb = xy[a], xy[b]
            if side(pa) != side(pb):
                mid = 0.5 * (pa[0] + pb[0])
                if not bridge_x.size or np.min(np.abs(bridge_x - mid)) > spec.side_m:
                    continue
            length = float(np.linalg.norm(pa - pb) * rng.uniform(1.0, 1.3))
            edges.append((pa[0], pa[1], pb[0], pb[1], length))
            ei.append(a)
            ej.append(b)
            ew.append(length)
    Gm = coo_matrix((ew, (ei, ej)), shape=(C, C)).tocsr()
    road = dijkstra(Gm, directed=False)
    finite = np.isfinite(road)
    road[~finite] = road[finite].max() * 2

    o_prof, d_prof = land_use_profiles()
    # districts (patches) share their propensities; cells vary only mildly
    n_all = K * spec.n_patches
    mass = np.asarray(spec.mass)[land] * rng.lognormal(0.0, spec.cell_noise, C)
    out_w = rng.lognormal(0.0, spec.sink_sigma, n_all)[patch] * rng.lognormal(0.0, spec.cell_noise, C)
    in_w = rng.lognormal(0.0, spec.sink_sigma, n_all)[patch] * rng.lognormal(0.0, spec.cell_noise, C)
    origin = (mass * out_w)[:, None] * o_prof[land]
    dest = (mass * in_w)[:, None] * d_prof[land]
    decay = np.exp(-road / spec.decay_m)
    out_flow = origin * (decay @ dest)  # (C, P)
    in_flow = dest * (decay.T @ origin)
    scale = spec.daily_trips / out_flow.sum()
    out_flow *= scale
    in_flow *= scale
    # overnight cars follow residential and leisure mass
    night_w = mass * np.where(land == 0, 1.0, np.where(land == 2, 0.6, 0.25))
    presence = night_w / night_w.sum()
    cum = np.cumsum(in_flow - out_flow, axis=1)
    cars = spec.fleet * presence[:, None] + cum - np.minimum(cum.min(axis=1, keepdims=True), 0)
    act = spec.delta * out_flow
    return CellCity(grid, land, dens, edges, road, origin, dest, decay, scale, cars, act, presence, spec)
