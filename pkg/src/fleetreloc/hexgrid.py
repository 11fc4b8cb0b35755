"""Hexagonal tessellation of a service area and road-network distances between cells.

All coordinates are planar and in meters. The lattice is pointy-top with its
origin at the lower-left corner of the polygon's bounding box unless an explicit
origin is given. Cell ``(q, r)`` in axial coordinates has its center at::

    x = origin_x + sqrt(3) * side * (q + r / 2)
    y = origin_y + 1.5 * side * r
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN

from ._validation import DataError, check_count, check_positive

AXIAL_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")


@dataclass(frozen=True)
class HexCell:
    id: int
    center: GeoPoint
    side: float
    neighbor_ids: tuple[int, ...]
    axial: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class HexGrid:
    cells: tuple[HexCell, ...]
    service_polygon: tuple[GeoPoint, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c.id: k for k, c in enumerate(self.cells)})

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    @property
    def ids(self):
        return [c.id for c in self.cells]

    def cell(self, cell_id) -> HexCell:
        return self.cells[self._index[cell_id]]

    def centers(self) -> np.ndarray:
        return np.array([(c.center.x, c.center.y) for c in self.cells], dtype=float).reshape(-1, 2)

    def subset(self, cell_ids) -> HexGrid:
        """Restrict the grid to ``cell_ids``; neighbor links leaving the subset are dropped."""
        keep = set(int(i) for i in cell_ids)
        cells = tuple(
            HexCell(c.id, c.center, c.side, tuple(n for n in c.neighbor_ids if n in keep), c.axial)
            for c in self.cells
            if c.id in keep
        )
        return HexGrid(cells, self.service_polygon)


def _polygon(points) -> shapely.Polygon:
    coords = [(p.x, p.y) if isinstance(p, GeoPoint) else (float(p[0]), float(p[1])) for p in points]
    if len(coords) < 3:
        raise ValueError("empty service area")
    poly = shapely.Polygon(coords)
    if poly.area <= 0:
        raise ValueError("empty service area")
    return poly


def tessellate(polygon, side: float, origin=None) -> HexGrid:
    """Cover ``polygon`` with pointy-top hexagons whose centers lie inside it.

    Parameters
    ----------
    polygon : sequence of GeoPoint or (x, y) pairs
        Closed or open ring of the service area.
    side : float
        Hexagon side length in meters.
    origin : (x, y), optional
        Lattice origin. Defaults to the bounding-box lower-left corner.
    """
    check_positive(side, "side")
    poly = _polygon(polygon)
    xmin, ymin, xmax, ymax = poly.bounds
    ox, oy = (xmin, ymin) if origin is None else (float(origin[0]), float(origin[1]))
    width = math.sqrt(3.0) * side

    r_lo = math.floor((ymin - oy) / (1.5 * side)) - 1
    r_hi = math.ceil((ymax - oy) / (1.5 * side)) + 1
    qs, rs = [], []
    for r in range(r_lo, r_hi + 1):
        q_lo = math.floor((xmin - ox) / width - r / 2.0) - 1
        q_hi = math.ceil((xmax - ox) / width - r / 2.0) + 1
        q = np.arange(q_lo, q_hi + 1)
        qs.append(q)
        rs.append(np.full(q.size, r))
    q = np.concatenate(qs)
    r = np.concatenate(rs)
    x = ox + width * (q + r / 2.0)
    y = oy + 1.5 * side * r
    inside = shapely.contains_xy(poly, x, y)
    q, r, x, y = q[inside], r[inside], x[inside], y[inside]

    order = np.lexsort((q, r))
    q, r, x, y = q[order], r[order], x[order], y[order]
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(q, r))}
    cells = []
    for k in range(q.size):
        qa, ra = int(q[k]), int(r[k])
        nbrs = tuple(
            sorted(lookup[(qa + dq, ra + dr)] for dq, dr in AXIAL_DIRECTIONS if (qa + dq, ra + dr) in lookup)
        )
        cells.append(HexCell(k, GeoPoint(float(x[k]), float(y[k])), float(side), nbrs, (qa, ra)))
    ring = tuple(GeoPoint(float(a), float(b)) for a, b in poly.exterior.coords)
    return HexGrid(tuple(cells), ring)


def dbscan_filter(points, eps: float = 500.0, min_pts: int = 3):
    """Label points with DBSCAN and return ``(labels, core_label)``.

    ``labels`` uses -1 for noise. ``core_label`` is the label of the largest
    cluster (lowest label among equally sized ones), or -1 if every point is noise.
    The point itself counts toward ``min_pts``.
    """
    check_positive(eps, "eps")
    check_count(min_pts, "min_pts", minimum=1)
    pts = np.array(
        [(p.x, p.y) if isinstance(p, GeoPoint) else tuple(p) for p in points], dtype=float
    ).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("dbscan_filter needs at least one point")
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(pts).labels_
    clustered = labels[labels >= 0]
    if clustered.size == 0:
        return labels, -1
    counts = np.bincount(clustered)
    return labels, int(np.argmax(counts))


def core_subgrid(grid: HexGrid, eps: float = 500.0, min_pts: int = 3) -> HexGrid:
    """Keep only the cells of the largest DBSCAN cluster of cell centers."""
    labels, core = dbscan_filter(grid.centers(), eps, min_pts)
    return grid.subset([c.id for c, lab in zip(grid.cells, labels) if lab == core])


class RoadGraph:
    """Undirected weighted road graph with every cell anchored to its nearest node."""

    def __init__(self, nodes, edges, cell_anchor):
        self.nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
        self.edges = [(int(a), int(b), float(w)) for a, b, w in edges]
        for a, b, w in self.edges:
            if not w > 0:
                raise DataError(f"road edge ({a}, {b}) has non-positive length {w}")
        self.cell_anchor = {int(k): int(v) for k, v in cell_anchor.items()}
        n = len(self.nodes)
        # parallel edges collapse to the shortest one; self-loops never shorten a path
        short = {}
        for x, y, w in self.edges:
            if x != y:
                key = (min(x, y), max(x, y))
                short[key] = min(short.get(key, math.inf), w)
        rows = [k[0] for k in short] + [k[1] for k in short]
        cols = [k[1] for k in short] + [k[0] for k in short]
        vals = list(short.values()) * 2
        self._csr = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        self._cache = {}

    @classmethod
    def from_edges(cls, edges_xy, grid: HexGrid) -> RoadGraph:
        """Build from ``(ax, ay, bx, by, length)`` rows, anchoring each grid cell."""
        index, nodes, edges = {}, [], []
        for ax, ay, bx, by, length in edges_xy:
            ids = []
            for key in ((float(ax), float(ay)), (float(bx), float(by))):
                if key not in index:
                    index[key] = len(nodes)
                    nodes.append(key)
                ids.append(index[key])
            edges.append((ids[0], ids[1], float(length)))
        if not nodes:
            raise DataError("road graph has no edges")
        nodes = np.array(nodes)
        _, nearest = cKDTree(nodes).query(grid.centers())
        anchors = {c.id: int(n) for c, n in zip(grid.cells, np.atleast_1d(nearest))}
        return cls(nodes, edges, anchors)

    def distances_from(self, node, limit=np.inf) -> np.ndarray:
        key = (node, limit)
        if key not in self._cache:
            self._cache[key] = dijkstra(self._csr, directed=False, indices=node, limit=limit)
        return self._cache[key]

    def node_distance(self, u, v) -> float:
        if u == v:
            return 0.0
        return float(self.distances_from(min(u, v))[max(u, v)])


def road_distance(a: HexCell, b: HexCell, g: RoadGraph, adjacency_only: bool = False) -> float:
    """Shortest road path between the anchors of two cells (meters, may be inf)."""
    if a.id == b.id:
        return 0.0
    if adjacency_only and b.id not in a.neighbor_ids:
        return math.inf
    try:
        u, v = g.cell_anchor[a.id], g.cell_anchor[b.id]
    except KeyError as exc:
        raise DataError(f"cell {exc.args[0]} has no road anchor") from None
    return g.node_distance(u, v)


def adjacent_road_distances(grid: HexGrid, g: RoadGraph, limit_factor: float = 20.0) -> dict:
    """Road distances for every adjacent cell pair ``(a, b)`` with ``a < b``."""
    out = {}
    for cell in grid.cells:
        pending = [n for n in cell.neighbor_ids if n > cell.id]
        if not pending:
            continue
        src = g.cell_anchor[cell.id]
        dist = g.distances_from(src, limit=limit_factor * cell.side)
        for n in pending:
            out[(cell.id, n)] = float(dist[g.cell_anchor[n]])
    return out


# --- file formats -----------------------------------------------------------------


def read_polygon_geojson(path) -> list[GeoPoint]:
    """Exterior ring of the first Polygon in a GeoJSON geometry, Feature or FeatureCollection."""
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("type") == "FeatureCollection":
        obj = obj["features"][0]
    if obj.get("type") == "Feature":
        obj = obj["geometry"]
    if obj.get("type") != "Polygon":
        raise DataError(f"expected a GeoJSON Polygon, got {obj.get('type')!r}")
    return [GeoPoint(float(x), float(y)) for x, y, *_ in obj["coordinates"][0]]


def write_polygon_geojson(path, polygon):
    ring = [[p.x, p.y] for p in polygon]
    if ring and ring[0] != ring[-1]:
        ring.append(ring[0])
    Path(path).write_text(json.dumps({"type": "Polygon", "coordinates": [ring]}))


def read_road_csv(path) -> list[tuple]:
    """Rows ``node_a_x,node_a_y,node_b_x,node_b_y,length_m`` (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("node_a_x"):
                continue
            try:
                rows.append(tuple(float(v) for v in rec[:5]))
            except ValueError:
                raise DataError(f"bad road edge row {rec!r}") from None
    return rows


def write_road_csv(path, edges_xy):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_a_x", "node_a_y", "node_b_x", "node_b_y", "length_m"])
        for row in edges_xy:
            w.writerow([repr(float(v)) for v in row])


def write_grid_csv(path, grid: HexGrid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "center_x", "center_y", "neighbor_ids"])
        for c in grid.cells:
            w.writerow([c.id, repr(c.center.x), repr(c.center.y), ";".join(map(str, c.neighbor_ids))])


def read_grid_csv(path, side: float) -> HexGrid:
    cells = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            nbrs = tuple(int(v) for v in rec["neighbor_ids"].split(";") if v != "")
            cells.append(HexCell(int(rec["cell_id"]), GeoPoint(float(rec["center_x"]), float(rec["center_y"])), side, nbrs))
    return HexGrid(tuple(cells))
