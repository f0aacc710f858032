"""Enclosure construction and tessellation conservation properties."""

import math

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon, box

from morpholcz.ingest import IngestConfig, preprocess_streets
from morpholcz.tessellation import (
    TessellationError,
    build_enclosures,
    link_elements,
    tessellate,
)
from morpholcz.types import Building, Enclosure, FeatureCollection

from scene import scene_buildings, scene_network, scene_study_area


def _network(lines):
    fc = FeatureCollection(ids=list(range(len(lines))), geometries=lines,
                           properties=[{} for _ in lines])
    net, _ = preprocess_streets(fc, IngestConfig(skip_simplify=True))
    return net


# ---------------------------------------------------------------------------
# build_enclosures


def test_single_street_cuts_square_in_two():
    study = box(0, 0, 100, 100)
    net = _network([LineString([(50, -10), (50, 110)])])
    enclosures = build_enclosures(net, [], [], study)
    assert len(enclosures) == 2
    assert math.isclose(sum(e.polygon.area for e in enclosures), study.area, rel_tol=1e-9)


def test_no_barriers_identity():
    study = box(0, 0, 30, 20)
    enclosures = build_enclosures(None, [], [], study)
    assert len(enclosures) == 1
    assert enclosures[0].polygon.equals(study)


def test_2x2_grid_nine_enclosures():
    study = box(0, 0, 90, 90)
    lines = [
        LineString([(30, 0), (30, 90)]), LineString([(60, 0), (60, 90)]),
        LineString([(0, 30), (90, 30)]), LineString([(0, 60), (90, 60)]),
    ]
    enclosures = build_enclosures(_network(lines), [], [], study)
    assert len(enclosures) == 9


def test_waterbody_interior_excluded():
    study = box(0, 0, 100, 100)
    pond = box(40, 40, 60, 60)
    enclosures = build_enclosures(None, [], [pond], study)
    total = sum(e.polygon.area for e in enclosures)
    assert math.isclose(total, study.area - pond.area, rel_tol=1e-9)


def test_degenerate_study_area():
    with pytest.raises(TessellationError):
        build_enclosures(None, [], [], Polygon())


# ---------------------------------------------------------------------------
# tessellate


def test_single_building_takes_enclosure():
    enclosure = Enclosure(id=0, polygon=box(0, 0, 50, 50))
    buildings = [Building(id=0, footprint=box(20, 20, 30, 30))]
    cells = tessellate(buildings, [enclosure])
    assert len(cells) == 1
    assert cells[0].polygon.equals(enclosure.polygon)


def test_symmetric_pair_splits_equally():
    enclosure = Enclosure(id=0, polygon=box(0, 0, 100, 40))
    buildings = [
        Building(id=0, footprint=box(20, 15, 30, 25)),
        Building(id=1, footprint=box(70, 15, 80, 25)),
    ]
    cells = tessellate(buildings, [enclosure])
    assert len(cells) == 2
    a0, a1 = cells[0].polygon.area, cells[1].polygon.area
    assert abs(a0 - a1) / max(a0, a1) <= 0.005


def test_three_collinear_buildings_middle_cell():
    # equally spaced identical squares: the middle cell is the middle third
    enclosure = Enclosure(id=0, polygon=box(0, 0, 90, 30))
    buildings = [
        Building(id=i, footprint=box(10 + 30 * i, 10, 20 + 30 * i, 20))
        for i in range(3)
    ]
    cells = tessellate(buildings, [enclosure])
    middle = [c for c in cells if c.building_id == 1][0]
    assert abs(middle.polygon.area - 900.0) / 900.0 <= 0.01


def random_scene(rng):
    w, h = rng.uniform(60, 160, 2)
    enclosure = Enclosure(id=0, polygon=box(0, 0, w, h))
    n = rng.integers(1, 7)
    buildings, placed = [], []
    for _ in range(200):
        if len(buildings) == n:
            break
        bw, bh = rng.uniform(6, 18, 2)
        x = rng.uniform(2, w - bw - 2)
        y = rng.uniform(2, h - bh - 2)
        fp = box(x, y, x + bw, y + bh)
        if all(fp.distance(p) > 1.0 for p in placed):
            placed.append(fp)
            buildings.append(Building(id=len(buildings), footprint=fp))
    return enclosure, buildings


def test_conservation_bijection_containment_on_random_enclosures():
    rng = np.random.default_rng(42)
    for _ in range(50):
        enclosure, buildings = random_scene(rng)
        cells = tessellate(buildings, [enclosure])
        # bijection with retained buildings
        assert sorted(c.building_id for c in cells) == [b.id for b in buildings]
        # area conservation within the enclosure
        total = sum(c.polygon.area for c in cells)
        assert abs(total - enclosure.polygon.area) / enclosure.polygon.area <= 1e-3
        by_building = {c.building_id: c for c in cells}
        for b in buildings:
            cell = by_building[b.id]
            # the shrunk footprint lies inside its own cell
            shrunk = b.footprint.buffer(-0.4)
            assert shrunk.difference(cell.polygon.buffer(1e-6)).area <= 1e-6
            # cells stay inside the enclosure
            assert cell.polygon.difference(enclosure.polygon.buffer(1e-9)).area <= 1e-6
        # interior-disjoint cells
        for i in range(len(cells)):
            for j in range(i + 1, len(cells)):
                inter = cells[i].polygon.intersection(cells[j].polygon)
                assert inter.area <= 1e-6


def test_determinism():
    enclosure = Enclosure(id=0, polygon=box(0, 0, 80, 60))
    buildings = [
        Building(id=0, footprint=box(10, 10, 25, 25)),
        Building(id=1, footprint=box(50, 30, 70, 50)),
    ]
    a = tessellate(buildings, [enclosure])
    b = tessellate(buildings, [enclosure])
    for ca, cb in zip(a, b):
        assert ca.polygon.wkb == cb.polygon.wkb


# ---------------------------------------------------------------------------
# link_elements


def test_links_match_exhaustive_oracle():
    buildings = scene_buildings()
    network = scene_network()
    study = scene_study_area()
    enclosures = build_enclosures(network, [], [], study)
    cells = link_elements(tessellate(buildings, enclosures), buildings, network)
    lines = network.segment_lines()
    node_ids = sorted(network.nodes)
    by_id = {b.id: b for b in buildings}
    for cell in cells:
        fp = by_id[cell.building_id].footprint
        dists = [fp.distance(ln) for ln in lines]
        dmin = min(dists)
        expected = min(
            s.id for s, d in zip(network.segments, dists) if d <= dmin + network.snap_tol
        )
        assert cell.nearest_street_id == expected
        assert cell.nearest_edge_id == expected
        from shapely.geometry import Point

        ndists = {n: fp.distance(Point(*network.nodes[n])) for n in node_ids}
        nmin = min(ndists.values())
        assert cell.nearest_node_id == min(
            n for n, d in ndists.items() if d <= nmin + network.snap_tol
        )


def test_tie_breaks_to_lower_street_id():
    enclosure = Enclosure(id=0, polygon=box(0, 0, 40, 40))
    buildings = [Building(id=0, footprint=box(15, 15, 25, 25))]
    net = _network([LineString([(0, 5), (40, 5)]), LineString([(0, 35), (40, 35)])])
    cells = link_elements(tessellate(buildings, [enclosure]), buildings, net)
    assert cells[0].nearest_street_id == 0
