import itertools
import math

import numpy as np
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetreloc.hexgrid import (
    AXIAL_DIRECTIONS,
    GeoPoint,
    HexCell,
    RoadGraph,
    core_subgrid,
    dbscan_filter,
    read_grid_csv,
    read_polygon_geojson,
    read_road_csv,
    road_distance,
    tessellate,
    write_grid_csv,
    write_polygon_geojson,
    write_road_csv,
)

SQUARE_1K = [(0, 0), (1000, 0), (1000, 1000), (0, 1000)]


def _square(size):
    return [(0, 0), (size, 0), (size, size), (0, size)]


def test_square_centers_inside_and_interior_cells_have_six_neighbors():
    poly = shapely.Polygon(_square(3000))
    grid = tessellate(_square(3000), 250)
    side = 250
    width = math.sqrt(3) * side
    for c in grid:
        assert poly.contains(shapely.Point(c.center.x, c.center.y))
        lattice_nbrs = [
            (c.center.x + width * (dq + dr / 2), c.center.y + 1.5 * side * dr) for dq, dr in AXIAL_DIRECTIONS
        ]
        if all(poly.contains(shapely.Point(x, y)) for x, y in lattice_nbrs):
            assert len(c.neighbor_ids) == 6
    small = tessellate(SQUARE_1K, 250)
    assert all(poly.contains(shapely.Point(c.center.x, c.center.y)) for c in small)


def test_neighbor_relation_symmetric_and_irreflexive():
    grid = tessellate(_square(2500), 250)
    for c in grid:
        assert c.id not in c.neighbor_ids
        for n in c.neighbor_ids:
            assert c.id in grid.cell(n).neighbor_ids
            d = math.dist((c.center.x, c.center.y), (grid.cell(n).center.x, grid.cell(n).center.y))
            assert d == pytest.approx(math.sqrt(3) * 250)


def test_tiny_polygon_around_lattice_point_gives_one_isolated_cell():
    # lattice point (0, 0) for an explicit origin; polygon much smaller than one hexagon
    poly = [(-50, -50), (50, -50), (50, 50), (-50, 50)]
    grid = tessellate(poly, 250, origin=(0, 0))
    assert len(grid) == 1
    assert grid.cells[0].neighbor_ids == ()
    assert (grid.cells[0].center.x, grid.cells[0].center.y) == (0.0, 0.0)


def test_city_scale_polygon_gives_thousand_cells():
    # ~9.5 km radius disc at side 250 m: order of 10^3 cells like the reported 1173
    angles = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    disc = [(9500 * np.cos(a), 9500 * np.sin(a)) for a in angles]
    grid = tessellate(disc, 250)
    assert 500 < len(grid) < 5000


def test_degenerate_polygon_rejected():
    with pytest.raises(ValueError, match="empty service area"):
        tessellate([(0, 0), (10, 0), (20, 0)], 250)
    with pytest.raises(ValueError):
        tessellate(SQUARE_1K, 0)


def test_tessellation_covers_interior_minus_band():
    size, side = 4000, 250
    grid = tessellate(_square(size), side)
    centers = grid.centers()
    rng = np.random.default_rng(0)
    pts = rng.uniform(2 * side, size - 2 * side, size=(2000, 2))
    d = np.min(np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2), axis=1)
    # every point of a hexagon is within its circumradius (= side) of the center
    assert (d <= side + 1e-9).all()


def _brute_dbscan_core(pts, eps, min_pts):
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    return (d <= eps).sum(axis=1) >= min_pts


def test_dbscan_single_blob():
    pts = [(0, 0), (100, 0), (0, 100), (100, 100), (50, 50)]
    labels, core = dbscan_filter(pts, eps=500, min_pts=3)
    assert set(labels) == {0}
    assert core == 0


def test_dbscan_two_blobs_and_noise():
    eps = 500.0
    blob = np.array([(0, 0), (100, 0), (0, 100), (100, 100)], dtype=float)
    pts = np.vstack([blob, blob + 10 * eps, [[-10 * eps, 5 * eps]]])
    labels, core = dbscan_filter(pts, eps=eps, min_pts=3)
    core_mask = _brute_dbscan_core(pts, eps, 3)
    assert core_mask[:8].all() and not core_mask[8]
    assert len(set(labels[:4])) == 1 and len(set(labels[4:8])) == 1
    assert labels[0] != labels[4]
    assert labels[8] == -1
    # equal-size clusters: lowest label wins
    assert core == min(labels[0], labels[4])


def test_dbscan_empty_input_raises():
    with pytest.raises(ValueError):
        dbscan_filter([], 500, 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), min_size=1, max_size=25), st.randoms())
def test_dbscan_core_partition_permutation_invariant(raw, rnd):
    pts = np.array(raw, dtype=float) * 100
    eps, min_pts = 250.0, 3
    labels, _ = dbscan_filter(pts, eps, min_pts)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    labels_p, _ = dbscan_filter(pts[perm], eps, min_pts)
    back = np.empty_like(labels_p)
    back[perm] = labels_p
    core = _brute_dbscan_core(pts, eps, min_pts)
    # noise set is order independent; core points keep the same partition
    assert set(np.flatnonzero(labels == -1)) == set(np.flatnonzero(back == -1))
    idx = np.flatnonzero(core)
    for a, b in itertools.combinations(idx, 2):
        assert (labels[a] == labels[b]) == (back[a] == back[b])
    for k in idx:
        assert labels[k] >= 0


def test_core_subgrid_drops_satellite():
    main = tessellate(_square(3000), 250)
    far = [(20000, 20000), (20600, 20000), (20600, 20600), (20000, 20600)]
    sat = tessellate(far, 250)
    cells = list(main.cells)
    offset = len(cells)
    for c in sat.cells:
        cells.append(HexCell(c.id + offset, c.center, c.side, tuple(n + offset for n in c.neighbor_ids)))
    from fleetreloc.hexgrid import HexGrid

    grid = HexGrid(tuple(cells))
    core = core_subgrid(grid)
    assert len(core) == len(main)


def _path_graph():
    cells = [
        HexCell(0, GeoPoint(0, 0), 250, (1,)),
        HexCell(1, GeoPoint(100, 0), 250, (0, 2)),
        HexCell(2, GeoPoint(300, 0), 250, (1,)),
    ]
    from fleetreloc.hexgrid import HexGrid

    grid = HexGrid(tuple(cells))
    edges = [(0, 0, 100, 0, 100.0), (100, 0, 300, 0, 200.0)]
    return grid, RoadGraph.from_edges(edges, grid)


def test_road_distance_examples():
    grid, g = _path_graph()
    a, b, c = grid.cells
    assert road_distance(a, a, g, True) == 0
    assert road_distance(a, a, g, False) == 0
    assert road_distance(a, c, g) == 300
    assert road_distance(a, c, g, adjacency_only=True) == math.inf
    assert road_distance(a, b, g, adjacency_only=True) == 100


def test_road_distance_disconnected_is_inf():
    from fleetreloc.hexgrid import HexGrid

    cells = (HexCell(0, GeoPoint(0, 0), 250, (1,)), HexCell(1, GeoPoint(1000, 0), 250, (0,)))
    grid = HexGrid(cells)
    g = RoadGraph.from_edges([(0, 0, 10, 0, 10.0), (1000, 0, 1010, 0, 10.0)], grid)
    assert road_distance(cells[0], cells[1], g) == math.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.data())
def test_road_distance_metric_properties(n, data):
    from fleetreloc.hexgrid import HexGrid

    # random connected graph: spanning path plus extra edges
    coords = [(float(k * 10), 0.0) for k in range(n)]
    edges = []
    for k in range(n - 1):
        w = data.draw(st.floats(1, 100))
        edges.append((*coords[k], *coords[k + 1], w))
    for _ in range(data.draw(st.integers(0, 6))):
        a, b = data.draw(st.integers(0, n - 1)), data.draw(st.integers(0, n - 1))
        if a != b:
            edges.append((*coords[a], *coords[b], data.draw(st.floats(1, 100))))
    cells = tuple(HexCell(k, GeoPoint(*coords[k]), 250, ()) for k in range(n))
    grid = HexGrid(cells)
    g = RoadGraph.from_edges(edges, grid)
    d = np.array([[road_distance(a, b, g) for b in cells] for a in cells])
    assert np.allclose(d, d.T)
    assert (d >= 0).all() and (np.diag(d) == 0).all()
    for i, j, k in itertools.product(range(n), repeat=3):
        assert d[i, k] <= d[i, j] + d[j, k] + 1e-9


def test_file_round_trips(tmp_path):
    grid = tessellate(_square(1500), 250)
    write_grid_csv(tmp_path / "grid.csv", grid)
    back = read_grid_csv(tmp_path / "grid.csv", 250)
    assert [c.neighbor_ids for c in back] == [c.neighbor_ids for c in grid]
    assert np.array_equal(back.centers(), grid.centers())

    write_polygon_geojson(tmp_path / "area.geojson", [GeoPoint(*p) for p in SQUARE_1K])
    ring = read_polygon_geojson(tmp_path / "area.geojson")
    assert ring[0] == ring[-1] == GeoPoint(0, 0)

    edges = [(0.0, 0.0, 1.0, 2.0, 3.5)]
    write_road_csv(tmp_path / "roads.csv", edges)
    assert read_road_csv(tmp_path / "roads.csv") == edges
