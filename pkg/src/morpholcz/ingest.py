"""Loading and preprocessing of buildings, streets and water layers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import shapely
from shapely import STRtree
from shapely.geometry import LineString, MultiLineString, MultiPolygon, Polygon
from shapely.geometry.base import BaseGeometry

from .network import StreetNetwork, merge_degree2_chains
from .types import Building, FeatureCollection, StreetSegment
from .vecio import VectorIOError, _crs_is_geographic, read_vector

logger = logging.getLogger(__name__)

TUNNEL_MAX_LEN = 50.0  # tunnels longer than this are dropped

_KIND_TYPES = {
    "buildings": (Polygon, MultiPolygon),
    "streets": (LineString, MultiLineString),
    "waterlines": (LineString, MultiLineString),
    "waterbodies": (Polygon, MultiPolygon),
    "reference": (Polygon, MultiPolygon),
    "study_area": (Polygon, MultiPolygon),
}


class IngestError(ValueError):
    pass


@dataclass
class IngestConfig:
    max_building_area: float = 200_000.0
    simplify_tol: float = 0.5
    merge_overlap_frac: float = 0.5
    small_building_area: float = 30.0
    snap_tol: float = 0.1
    skip_simplify: bool = False


@dataclass
class PreprocessReport:
    counters: dict[str, int] = field(default_factory=dict)
    area_deltas: list[dict] = field(default_factory=list)

    def bump(self, rule: str, n: int = 1) -> None:
        self.counters[rule] = self.counters.get(rule, 0) + n

    def log_area_delta(self, rule: str, feature_id: int, delta: float) -> None:
        self.area_deltas.append({"rule": rule, "id": int(feature_id), "delta": float(delta)})

    def as_dict(self) -> dict:
        return {"counters": dict(self.counters), "area_deltas": list(self.area_deltas)}


def load_layer(path: str | Path, kind: str) -> FeatureCollection:
    """Load a vector layer and keep only geometries matching the kind."""
    if kind not in _KIND_TYPES:
        raise IngestError(f"unknown layer kind: {kind}")
    fc = read_vector(path)
    if _crs_is_geographic(fc.crs):
        raise IngestError(
            f"{path}: projected CRS required (got geographic {fc.crs}); reproject to meters"
        )
    wanted = _KIND_TYPES[kind]
    ids, geoms, props = [], [], []
    dropped = 0
    for fid, geom, prop in zip(fc.ids, fc.geometries, fc.properties):
        if kind == "streets" and str(prop.get("class", "")).lower() == "service":
            dropped += 1
            continue
        if isinstance(geom, wanted) and not geom.is_empty:
            ids.append(fid)
            geoms.append(geom)
            props.append(prop)
        else:
            dropped += 1
    if not geoms:
        raise IngestError(f"{path}: no usable {kind} features")
    if dropped:
        logger.info("%s: dropped %d features with non-matching geometry", path, dropped)
    return FeatureCollection(ids=ids, geometries=geoms, properties=props, crs=fc.crs, dropped=dropped)


def _polygonal_parts(geom: BaseGeometry) -> list[Polygon]:
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    if hasattr(geom, "geoms"):  # GeometryCollection from make_valid
        out: list[Polygon] = []
        for g in geom.geoms:
            out.extend(_polygonal_parts(g))
        return out
    return []


def preprocess_buildings(
    raw: FeatureCollection, cfg: IngestConfig | None = None
) -> tuple[list[Building], PreprocessReport]:
    """Clean building footprints: fix, explode, filter, simplify, de-overlap, merge."""
    cfg = cfg or IngestConfig()
    report = PreprocessReport()

    # 1-3: fix invalid rings, explode multipolygons, drop non-polygons
    polys: list[Polygon] = []
    for geom in raw.geometries:
        fixed = geom if geom.is_valid else shapely.make_valid(geom)
        if not fixed.equals(geom):
            report.bump("fixed_invalid")
        parts = _polygonal_parts(fixed)
        if len(parts) > 1:
            report.bump("exploded_multipolygons")
        if not parts:
            report.bump("dropped_non_polygon")
        for part in parts:
            if part.area > 0:
                polys.append(shapely.normalize(part))

    # 4: drop excessively large footprints
    kept = []
    for poly in polys:
        if poly.area > cfg.max_building_area:
            report.bump("dropped_too_large")
            report.log_area_delta("dropped_too_large", len(kept), -poly.area)
        else:
            kept.append(poly)
    polys = kept

    # 5: simplify boundaries preserving per-feature topology
    if cfg.simplify_tol > 0:
        simplified = []
        for poly in polys:
            simp = poly.simplify(cfg.simplify_tol, preserve_topology=True)
            if simp.is_valid and not simp.is_empty and simp.area > 0:
                simplified.append(simp)
            else:
                simplified.append(poly)
        polys = simplified

    polys = _resolve_overlaps(polys, cfg, report)
    polys = _merge_small_touching(polys, cfg, report)

    buildings = [Building(id=i, footprint=poly) for i, poly in enumerate(polys)]
    return buildings, report


def _resolve_overlaps(
    polys: list[Polygon], cfg: IngestConfig, report: PreprocessReport
) -> list[Polygon]:
    """Merge or trim positively-overlapping footprints, largest overlaps first."""
    geoms: dict[int, Polygon] = dict(enumerate(polys))
    tree = STRtree(polys)
    left, right = tree.query(polys, predicate="intersects")
    pairs = []
    for i, j in zip(left.tolist(), right.tolist()):
        if i >= j:
            continue
        inter = polys[i].intersection(polys[j])
        if inter.area > 1e-9:
            pairs.append((inter.area, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))

    for _, i, j in pairs:
        if i not in geoms or j not in geoms:
            continue
        a, b = geoms[i], geoms[j]
        inter = a.intersection(b)
        if inter.area <= 1e-9:
            continue
        small, large = (i, j) if a.area <= b.area else (j, i)
        frac = inter.area / geoms[small].area
        if frac > cfg.merge_overlap_frac:
            merged = geoms[large].union(geoms[small])
            merged = max(_polygonal_parts(merged), key=lambda p: p.area, default=None)
            if merged is not None:
                report.log_area_delta(
                    "merged_overlap", large, merged.area - geoms[large].area - geoms[small].area
                )
                geoms[large] = merged
                del geoms[small]
                report.bump("merged_overlap")
        else:
            trimmed = geoms[small].difference(geoms[large])
            parts = _polygonal_parts(trimmed)
            if parts:
                new = max(parts, key=lambda p: p.area)
                report.log_area_delta("trimmed_overlap", small, new.area - geoms[small].area)
                geoms[small] = new
                report.bump("trimmed_overlap")
            else:
                report.log_area_delta("trimmed_away", small, -geoms[small].area)
                del geoms[small]
                report.bump("trimmed_away")
    return [geoms[k] for k in sorted(geoms)]


def _merge_small_touching(
    polys: list[Polygon], cfg: IngestConfig, report: PreprocessReport
) -> list[Polygon]:
    """Fold footprints below the small-building threshold into touching larger ones."""
    geoms: dict[int, Polygon] = dict(enumerate(polys))
    tree = STRtree(polys)
    small_ids = sorted(
        (k for k, g in geoms.items() if g.area < cfg.small_building_area),
        key=lambda k: geoms[k].area,
    )
    for k in small_ids:
        if k not in geoms:
            continue
        candidates = tree.query(geoms[k], predicate="intersects")
        best = None
        for c in sorted(candidates.tolist()):
            if c == k or c not in geoms:
                continue
            if geoms[c].area <= geoms[k].area:
                continue
            if geoms[k].touches(geoms[c]) or geoms[k].intersects(geoms[c]):
                if best is None or geoms[c].area > geoms[best].area:
                    best = c
        if best is not None:
            merged = geoms[best].union(geoms[k])
            merged = max(_polygonal_parts(merged), key=lambda p: p.area, default=None)
            if merged is not None:
                report.log_area_delta(
                    "merged_small", best, merged.area - geoms[best].area - geoms[k].area
                )
                geoms[best] = merged
                del geoms[k]
                report.bump("merged_small")
    return [geoms[k] for k in sorted(geoms)]


def preprocess_streets(
    raw: FeatureCollection, cfg: IngestConfig | None = None
) -> tuple[StreetNetwork, PreprocessReport]:
    """Drop long tunnels, dedupe, node at intersections, merge degree-2 chains."""
    cfg = cfg or IngestConfig()
    report = PreprocessReport()
    lines: list[LineString] = []
    for geom, prop in zip(raw.geometries, raw.properties or [{}] * len(raw)):
        parts = (
            list(geom.geoms) if isinstance(geom, MultiLineString) else [geom]
        )
        is_tunnel = bool(prop.get("is_tunnel") or prop.get("tunnel"))
        for part in parts:
            if part.length <= 0:
                continue
            if is_tunnel and part.length > TUNNEL_MAX_LEN:
                report.bump("dropped_tunnel")
                continue
            lines.append(part)

    if cfg.skip_simplify:
        merged = []
        seen = set()
        for ln in lines:
            key = shapely.to_wkb(shapely.normalize(ln))
            if key in seen:
                report.bump("deduplicated")
                continue
            seen.add(key)
            merged.append(ln)
    else:
        n_before = len(lines)
        if cfg.snap_tol > 0:
            lines = [
                g for g in (shapely.set_precision(ln, cfg.snap_tol) for ln in lines)
                if isinstance(g, LineString) and g.length > 0
            ]
        merged = merge_degree2_chains(lines)
        report.bump("noded_and_merged", max(0, n_before - len(merged)))

    if not merged:
        raise IngestError("street network is empty after filtering")
    segments = [StreetSegment(id=i, line=ln) for i, ln in enumerate(merged)]
    return StreetNetwork(segments=segments, snap_tol=cfg.snap_tol), report


def consistency_check(
    buildings: list[Building],
    network: StreetNetwork,
    waterlines: list[LineString],
    waterbodies: list[Polygon],
) -> tuple[list[Building], list[LineString], PreprocessReport]:
    """Cross-layer topology: drop buildings crossing streets or waterbody
    interiors, and waterlines crossing buildings."""
    report = PreprocessReport()
    street_tree = STRtree(network.segment_lines()) if not network.is_empty else None
    body_tree = STRtree(waterbodies) if waterbodies else None

    kept_buildings: list[Building] = []
    for b in buildings:
        remove = False
        if street_tree is not None:
            for idx in street_tree.query(b.footprint, predicate="intersects"):
                line = network.segments[int(idx)].line
                if not line.touches(b.footprint):
                    remove = True
                    break
        if not remove and body_tree is not None:
            for idx in body_tree.query(b.footprint, predicate="intersects"):
                body = waterbodies[int(idx)]
                if b.footprint.intersection(body).area > 1e-9 or b.footprint.within(body):
                    remove = True
                    break
        if remove:
            report.bump("removed_building")
        else:
            kept_buildings.append(b)

    bldg_tree = STRtree([b.footprint for b in kept_buildings]) if kept_buildings else None
    kept_waterlines: list[LineString] = []
    for wl in waterlines:
        remove = False
        if bldg_tree is not None:
            hits = bldg_tree.query(wl, predicate="intersects")
            remove = len(hits) > 0
        if remove:
            report.bump("removed_waterline")
        else:
            kept_waterlines.append(wl)

    # Reassign stable sequential ids after removals.
    kept_buildings = [Building(id=i, footprint=b.footprint) for i, b in enumerate(kept_buildings)]
    return kept_buildings, kept_waterlines, report
