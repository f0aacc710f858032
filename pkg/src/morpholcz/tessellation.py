"""Enclosures from barriers and Voronoi-based enclosed tessellation cells."""

from __future__ import annotations

import logging

import numpy as np
import shapely
from scipy.spatial import Voronoi
from shapely import STRtree
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from .network import StreetNetwork
from .types import Building, Enclosure, EtcCell

logger = logging.getLogger(__name__)

DEFAULT_SEGMENT_LEN = 0.5
DEFAULT_SHRINK = 0.4


class TessellationError(ValueError):
    pass


def _polygonal(geom: BaseGeometry) -> list[Polygon]:
    if isinstance(geom, Polygon):
        return [geom] if geom.area > 0 else []
    if isinstance(geom, (MultiPolygon,)) or hasattr(geom, "geoms"):
        out: list[Polygon] = []
        for g in geom.geoms:
            out.extend(_polygonal(g))
        return out
    return []


def build_enclosures(
    network: StreetNetwork | None,
    waterlines: list[LineString],
    waterbodies: list[Polygon],
    study_area: Polygon,
) -> list[Enclosure]:
    """Polygonize all barrier lines clipped to the study area.

    Waterbody interiors are excluded faces.
    """
    if study_area is None or study_area.is_empty or study_area.area <= 0:
        raise TessellationError("degenerate study area")
    barriers: list[BaseGeometry] = [study_area.boundary]
    if network is not None and not network.is_empty:
        barriers.extend(network.segment_lines())
    barriers.extend(waterlines)
    barriers.extend(body.boundary for body in waterbodies)

    mesh = shapely.union_all(barriers)
    faces = _polygonal(shapely.polygonize([mesh]))

    body_tree = STRtree(waterbodies) if waterbodies else None
    enclosures: list[Polygon] = []
    for face in faces:
        clipped = face.intersection(study_area)
        for part in _polygonal(clipped):
            rep = part.representative_point()
            if body_tree is not None:
                inside_water = any(
                    waterbodies[int(i)].contains(rep)
                    for i in body_tree.query(rep, predicate="intersects")
                )
                if inside_water:
                    continue
            enclosures.append(part)
    enclosures.sort(key=shapely.to_wkb)
    return [Enclosure(id=i, polygon=p) for i, p in enumerate(enclosures)]


def _generator_points(footprint: Polygon, segment_len: float, shrink: float):
    """Densified boundary points of an inward-shrunk footprint."""
    geom = footprint.buffer(-shrink) if shrink > 0 else footprint
    if geom.is_empty or geom.area <= 0:
        c = footprint.centroid
        return np.array([[c.x, c.y]])
    coords = []
    for part in _polygonal(geom):
        dense = shapely.segmentize(part, segment_len)
        coords.append(np.asarray(dense.exterior.coords)[:-1])
        for ring in dense.interiors:
            coords.append(np.asarray(ring.coords)[:-1])
    return np.vstack(coords)


def _assign_buildings(
    buildings: list[Building], enclosures: list[Enclosure]
) -> dict[int, list[Building]]:
    """Map enclosure id -> buildings, assigning by largest footprint share."""
    tree = STRtree([e.polygon for e in enclosures])
    assignment: dict[int, list[Building]] = {}
    for b in buildings:
        hits = tree.query(b.footprint, predicate="intersects")
        best, best_area = None, 0.0
        for idx in sorted(hits.tolist()):
            share = b.footprint.intersection(enclosures[idx].polygon).area
            if share > best_area:
                best, best_area = idx, share
        if best is None:
            logger.warning("building %d lies outside all enclosures; dropped", b.id)
            continue
        assignment.setdefault(best, []).append(b)
    return assignment


def tessellate(
    buildings: list[Building],
    enclosures: list[Enclosure],
    segment_len: float = DEFAULT_SEGMENT_LEN,
    shrink: float = DEFAULT_SHRINK,
) -> list[EtcCell]:
    """One cell per building: Voronoi of densified footprint boundaries,
    dissolved by building and clipped to the containing enclosure."""
    assignment = _assign_buildings(buildings, enclosures)
    cells: list[tuple[int, int, Polygon]] = []  # (building_id, enclosure_id, polygon)
    for enc_id in sorted(assignment):
        enclosure = enclosures[enc_id]
        group = assignment[enc_id]
        if len(group) == 1:
            cells.append((group[0].id, enc_id, enclosure.polygon))
            continue
        pts, labels = [], []
        for b in group:
            p = _generator_points(b.footprint, segment_len, shrink)
            if p.shape[0] == 1:
                logger.info("building %d shrank to empty; centroid generator used", b.id)
            pts.append(p)
            labels.append(np.full(p.shape[0], b.id))
        points = np.vstack(pts)
        labels = np.concatenate(labels)
        # Coincident points would confuse Qhull; keep the first occurrence.
        _, keep = np.unique(np.round(points, 6), axis=0, return_index=True)
        keep.sort()
        points, labels = points[keep], labels[keep]

        for bid, poly in _voronoi_dissolve(points, labels, enclosure.polygon):
            cells.append((bid, enc_id, poly))

    cells.sort(key=lambda t: t[0])
    return [
        EtcCell(id=i, polygon=poly, building_id=bid, enclosure_id=eid)
        for i, (bid, eid, poly) in enumerate(cells)
    ]


def _voronoi_dissolve(points: np.ndarray, labels: np.ndarray, enclosure: Polygon):
    """Voronoi faces of `points`, unioned per label and clipped to `enclosure`."""
    minx, miny, maxx, maxy = enclosure.bounds
    span = max(maxx - minx, maxy - miny, 1.0)
    pad = 100.0 * span
    dummies = np.array(
        [
            [minx - pad, miny - pad],
            [minx - pad, maxy + pad],
            [maxx + pad, miny - pad],
            [maxx + pad, maxy + pad],
        ]
    )
    vor = Voronoi(np.vstack([points, dummies]))
    by_label: dict[int, list[Polygon]] = {}
    for i in range(points.shape[0]):
        region = vor.regions[vor.point_region[i]]
        if not region or -1 in region:
            continue
        face = Polygon(vor.vertices[region])
        by_label.setdefault(int(labels[i]), []).append(face)
    for bid in sorted(by_label):
        merged = shapely.make_valid(shapely.union_all(by_label[bid]))
        clipped = merged.intersection(enclosure)
        parts = _polygonal(clipped)
        if not parts:
            continue
        poly = parts[0] if len(parts) == 1 else MultiPolygon(parts)
        yield bid, poly


def link_elements(
    cells: list[EtcCell], buildings: list[Building], network: StreetNetwork | None
) -> list[EtcCell]:
    """Attach nearest street / node / edge ids to each cell (via its building).

    Ties within the network snap tolerance break toward the lowest id.
    """
    if network is None or network.is_empty:
        return cells
    by_id = {b.id: b for b in buildings}
    tol = network.snap_tol

    def nearest_id(tree: STRtree, geoms: list, ids: list[int], fp) -> int | None:
        hits = tree.query_nearest(fp, all_matches=False)
        if not len(hits):
            return None
        dmin = fp.distance(geoms[int(hits[0])])
        near = tree.query(fp.buffer(dmin + tol), predicate="intersects")
        ties = [ids[int(i)] for i in near if fp.distance(geoms[int(i)]) <= dmin + tol]
        return min(ties) if ties else ids[int(hits[0])]

    seg_geoms = network.segment_lines()
    seg_ids = [s.id for s in network.segments]
    seg_tree = STRtree(seg_geoms)
    node_ids = sorted(network.nodes)
    node_pts = [shapely.Point(*network.nodes[n]) for n in node_ids]
    node_tree = STRtree(node_pts)
    for cell in cells:
        fp = by_id[cell.building_id].footprint
        sid = nearest_id(seg_tree, seg_geoms, seg_ids, fp)
        cell.nearest_street_id = sid
        cell.nearest_edge_id = sid
        cell.nearest_node_id = nearest_id(node_tree, node_pts, node_ids, fp)
    return cells
