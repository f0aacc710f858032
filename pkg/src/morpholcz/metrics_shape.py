"""Per-polygon dimension and shape attributes."""

from __future__ import annotations

import math

import numpy as np
import shapely
from shapely import STRtree
from shapely.geometry import Polygon


def minimum_rotated_rectangle_sides(geom) -> tuple[float, float]:
    """(shorter, longer) side lengths of the minimum rotated rectangle."""
    mrr = shapely.oriented_envelope(geom)
    coords = np.asarray(mrr.exterior.coords) if isinstance(mrr, Polygon) else None
    if coords is None or len(coords) < 4:
        return 0.0, 0.0
    a = float(np.hypot(*(coords[1] - coords[0])))
    b = float(np.hypot(*(coords[2] - coords[1])))
    return (min(a, b), max(a, b))


def orientation_deg(geom) -> float:
    """Azimuth of the longer minimum-rotated-rectangle side, folded to [0, 90)."""
    mrr = shapely.oriented_envelope(geom)
    if not isinstance(mrr, Polygon):
        # Degenerate geometries collapse to a line or point.
        coords = np.asarray(mrr.coords) if hasattr(mrr, "coords") else None
        if coords is None or len(coords) < 2:
            return float("nan")
        vec = coords[-1] - coords[0]
    else:
        coords = np.asarray(mrr.exterior.coords)
        e1 = coords[1] - coords[0]
        e2 = coords[2] - coords[1]
        vec = e1 if np.hypot(*e1) >= np.hypot(*e2) else e2
    az = math.degrees(math.atan2(vec[0], vec[1]))  # from north, clockwise
    return az % 90.0


def street_alignment_deg(building_orientation: float, street_orientation: float) -> float:
    """Angular deviation between two orientations, folded to [0, 45]."""
    x = abs(building_orientation - street_orientation) % 90.0
    return min(x, 90.0 - x)


def courtyard_area(poly: Polygon) -> float:
    return float(sum(Polygon(ring).area for ring in poly.interiors))


def perimeter_wall_lengths(polys: list[Polygon]) -> np.ndarray:
    """Perimeter of the joined structure each building belongs to.

    Buildings in one connected component of mutual contact share the value.
    """
    n = len(polys)
    out = np.full(n, np.nan)
    if n == 0:
        return out
    tree = STRtree(polys)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    left, right = tree.query(polys, predicate="intersects")
    for i, j in zip(left.tolist(), right.tolist()):
        if i < j:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    for members in groups.values():
        merged = shapely.union_all([polys[i] for i in members])
        for i in members:
            out[i] = merged.length
    return out


def shape_dimension_metrics(polys: list[Polygon], element: str) -> dict[str, np.ndarray]:
    """Columns of per-polygon dimension and shape attributes.

    `element` is 'bldg' or 'etc'; courtyard and perimeter-wall attributes are
    building-only.
    """
    n = len(polys)
    area = np.array([p.area for p in polys])
    perim = np.array([p.length for p in polys])
    hull_area = np.array([p.convex_hull.area for p in polys])
    radius = np.array([shapely.minimum_bounding_radius(p) for p in polys])
    sides = np.array([minimum_rotated_rectangle_sides(p) for p in polys]).reshape(n, 2)
    short, long_ = sides[:, 0], sides[:, 1]
    mrr_area = short * long_
    mrr_perim = 2 * (short + long_)

    degenerate = area <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        L = 2 * radius
        circular = area / (np.pi * radius**2)
        square = 16 * area / perim**2
        cwa = L * (4 / np.pi - 16 * area / perim**2)
        convexity = area / hull_area
        elongation = np.where(long_ > 0, short / long_, np.nan)
        eri = np.sqrt(np.where(mrr_area > 0, area / mrr_area, np.nan)) * (mrr_perim / perim)
        facade = area / perim
        log_area = np.log(area)
        fractal = np.where(
            np.abs(log_area) > 0, 2 * np.log(perim / 4) / log_area, np.nan
        )
        rectangularity = np.where(mrr_area > 0, area / mrr_area, np.nan)
        shape_index = np.sqrt(area / np.pi) / radius

    cols = {
        f"{element}_area": area,
        f"{element}_longest_axis": L,
        f"{element}_circular_compactness": circular,
        f"{element}_square_compactness": square,
        f"{element}_cwa": cwa,
        f"{element}_convexity": convexity,
        f"{element}_elongation": elongation,
        f"{element}_eri": eri,
        f"{element}_facade_ratio": facade,
        f"{element}_fractal_dimension": fractal,
        f"{element}_rectangularity": rectangularity,
        f"{element}_shape_index": shape_index,
    }
    if element == "bldg":
        cy = np.array([courtyard_area(p) for p in polys])
        cols["bldg_courtyard_area"] = cy
        with np.errstate(divide="ignore", invalid="ignore"):
            cols["bldg_courtyard_index"] = cy / (area + cy)
        cols["bldg_perimeter_wall"] = perimeter_wall_lengths(polys)
    for name, values in cols.items():
        values[degenerate] = np.nan
    return cols


def area_weighted(
    values: np.ndarray, areas: np.ndarray, neighborhoods: list[np.ndarray]
) -> np.ndarray:
    """Area-weighted neighborhood mean; the focal object is part of its own
    neighborhood. An empty neighborhood falls back to the object's own value."""
    n = len(values)
    out = np.full(n, np.nan)
    for i in range(n):
        idx = neighborhoods[i]
        members = np.append(idx, i) if i not in idx else idx
        vals = values[members]
        wts = areas[members]
        ok = ~np.isnan(vals)
        if not ok.any() or wts[ok].sum() <= 0:
            out[i] = values[i]
        else:
            out[i] = float(np.sum(wts[ok] * vals[ok]) / np.sum(wts[ok]))
    return out
