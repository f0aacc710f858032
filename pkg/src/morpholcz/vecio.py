"""Vector layer I/O: GeoJSON and a minimal GeoPackage reader/writer.

Both formats carry geometries plus an integer id and optional flat
properties. Coordinates are expected in a projected CRS (meters).
"""

from __future__ import annotations

import json
import sqlite3
import struct
from pathlib import Path

import shapely
from shapely.geometry import mapping, shape
from shapely.geometry.base import BaseGeometry

from .types import FeatureCollection

GEOGRAPHIC_MARKERS = ("4326", "CRS84", "crs84")

_GPKG_APPLICATION_ID = 0x47504B47


class VectorIOError(ValueError):
    pass


def _crs_is_geographic(crs: str | None) -> bool:
    if crs is None:
        return False
    return any(marker in str(crs) for marker in GEOGRAPHIC_MARKERS)


def read_vector(path: str | Path) -> FeatureCollection:
    """Read a GeoJSON (.geojson/.json) or GeoPackage (.gpkg) layer."""
    path = Path(path)
    if not path.exists():
        raise VectorIOError(f"file not found: {path}")
    if path.suffix.lower() == ".gpkg":
        return read_gpkg(path)
    return read_geojson(path)


def write_vector(path: str | Path, fc: FeatureCollection) -> None:
    path = Path(path)
    if path.suffix.lower() == ".gpkg":
        write_gpkg(path, fc)
    else:
        write_geojson(path, fc)


# ---------------------------------------------------------------------------
# GeoJSON


def read_geojson(path: str | Path) -> FeatureCollection:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise VectorIOError(f"cannot read {path}: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise VectorIOError(f"{path}: not a GeoJSON FeatureCollection")
    crs = None
    if "crs" in doc:
        crs = str(doc["crs"].get("properties", {}).get("name", ""))
    ids, geoms, props = [], [], []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry")
        if geom is None:
            continue
        ids.append(int(feat.get("id", feat.get("properties", {}).get("id", i)) or i))
        geoms.append(shape(geom))
        props.append(dict(feat.get("properties") or {}))
    return FeatureCollection(ids=ids, geometries=geoms, properties=props, crs=crs)


def write_geojson(path: str | Path, fc: FeatureCollection) -> None:
    features = []
    props = fc.properties or [{} for _ in fc.ids]
    for fid, geom, prop in zip(fc.ids, fc.geometries, props):
        features.append(
            {
                "type": "Feature",
                "id": int(fid),
                "properties": {"id": int(fid), **prop},
                "geometry": mapping(geom),
            }
        )
    doc: dict = {"type": "FeatureCollection", "features": features}
    if fc.crs:
        doc["crs"] = {"type": "name", "properties": {"name": fc.crs}}
    with open(path, "w") as fh:
        json.dump(doc, fh)


# ---------------------------------------------------------------------------
# GeoPackage (minimal profile: one feature table, XY geometries)


def _gpkg_blob(geom: BaseGeometry, srs_id: int) -> bytes:
    minx, miny, maxx, maxy = geom.bounds
    header = b"GP" + bytes([0, 0b00000011])  # little endian, XY envelope
    header += struct.pack("<i", srs_id)
    header += struct.pack("<4d", minx, maxx, miny, maxy)
    return header + shapely.to_wkb(geom)


def _gpkg_parse_blob(blob: bytes) -> BaseGeometry:
    if blob[:2] != b"GP":
        raise VectorIOError("not a GeoPackage geometry blob")
    flags = blob[3]
    envelope_code = (flags >> 1) & 0b111
    env_len = {0: 0, 1: 32, 2: 48, 3: 48, 4: 64}[envelope_code]
    return shapely.from_wkb(blob[8 + env_len :])


def _srs_id_from_crs(crs: str | None) -> int:
    if crs is None:
        return -1
    digits = "".join(ch for ch in str(crs) if ch.isdigit())
    return int(digits) if digits else -1


def write_gpkg(path: str | Path, fc: FeatureCollection, layer: str = "layer") -> None:
    path = Path(path)
    if path.exists():
        path.unlink()
    srs_id = _srs_id_from_crs(fc.crs)
    con = sqlite3.connect(path)
    try:
        con.execute(f"PRAGMA application_id = {_GPKG_APPLICATION_ID}")
        con.execute("PRAGMA user_version = 10300")
        con.execute(
            """CREATE TABLE gpkg_spatial_ref_sys (
                srs_name TEXT NOT NULL, srs_id INTEGER PRIMARY KEY,
                organization TEXT NOT NULL, organization_coordsys_id INTEGER NOT NULL,
                definition TEXT NOT NULL, description TEXT)"""
        )
        con.execute(
            "INSERT INTO gpkg_spatial_ref_sys VALUES (?, ?, ?, ?, ?, ?)",
            (f"EPSG:{srs_id}", srs_id, "EPSG", srs_id, "undefined", None),
        )
        con.execute(
            """CREATE TABLE gpkg_contents (
                table_name TEXT PRIMARY KEY, data_type TEXT NOT NULL,
                identifier TEXT UNIQUE, description TEXT DEFAULT '',
                last_change DATETIME, min_x DOUBLE, min_y DOUBLE,
                max_x DOUBLE, max_y DOUBLE, srs_id INTEGER)"""
        )
        con.execute(
            """CREATE TABLE gpkg_geometry_columns (
                table_name TEXT NOT NULL, column_name TEXT NOT NULL,
                geometry_type_name TEXT NOT NULL, srs_id INTEGER NOT NULL,
                z TINYINT NOT NULL, m TINYINT NOT NULL,
                CONSTRAINT pk_geom_cols PRIMARY KEY (table_name, column_name))"""
        )
        con.execute(
            f'CREATE TABLE "{layer}" (fid INTEGER PRIMARY KEY, geom BLOB, properties TEXT)'
        )
        props = fc.properties or [{} for _ in fc.ids]
        for fid, geom, prop in zip(fc.ids, fc.geometries, props):
            con.execute(
                f'INSERT INTO "{layer}" VALUES (?, ?, ?)',
                (int(fid), _gpkg_blob(geom, srs_id), json.dumps(prop)),
            )
        if fc.geometries:
            bounds = shapely.total_bounds(fc.geometries)
        else:
            bounds = (None, None, None, None)
        con.execute(
            "INSERT INTO gpkg_contents VALUES (?, 'features', ?, '', NULL, ?, ?, ?, ?, ?)",
            (layer, layer, bounds[0], bounds[1], bounds[2], bounds[3], srs_id),
        )
        con.execute(
            "INSERT INTO gpkg_geometry_columns VALUES (?, 'geom', 'GEOMETRY', ?, 0, 0)",
            (layer, srs_id),
        )
        con.commit()
    finally:
        con.close()


def read_gpkg(path: str | Path, layer: str | None = None) -> FeatureCollection:
    con = sqlite3.connect(path)
    try:
        try:
            rows = con.execute(
                "SELECT table_name, srs_id FROM gpkg_geometry_columns"
            ).fetchall()
        except sqlite3.DatabaseError as exc:
            raise VectorIOError(f"cannot read {path}: {exc}") from exc
        if not rows:
            raise VectorIOError(f"{path}: no feature layers")
        if layer is None:
            layer = rows[0][0]
        srs_id = dict(rows).get(layer, -1)
        cols = [r[1] for r in con.execute(f'PRAGMA table_info("{layer}")')]
        has_props = "properties" in cols
        ids, geoms, props = [], [], []
        select = f'SELECT fid, geom{", properties" if has_props else ""} FROM "{layer}"'
        for row in con.execute(select):
            if row[1] is None:
                continue
            ids.append(int(row[0]))
            geoms.append(_gpkg_parse_blob(row[1]))
            props.append(json.loads(row[2]) if has_props and row[2] else {})
        crs = f"EPSG:{srs_id}" if srs_id and srs_id > 0 else None
        return FeatureCollection(ids=ids, geometries=geoms, properties=props, crs=crs)
    finally:
        con.close()
