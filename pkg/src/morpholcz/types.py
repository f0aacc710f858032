"""Core domain types shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

from shapely.geometry.base import BaseGeometry
from shapely.geometry import LineString, Polygon


@dataclass
class FeatureCollection:
    """A loaded vector layer: parallel lists of ids and geometries."""

    ids: list[int]
    geometries: list[BaseGeometry]
    properties: list[dict] = field(default_factory=list)
    crs: str | None = None
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.geometries)


@dataclass
class Building:
    id: int
    footprint: Polygon

    @property
    def area(self) -> float:
        return self.footprint.area


@dataclass
class StreetSegment:
    id: int
    line: LineString
    is_tunnel: bool = False

    @property
    def length_m(self) -> float:
        return self.line.length


@dataclass
class BarrierSet:
    waterlines: list[LineString]
    waterbodies: list[Polygon]
    study_area: Polygon


@dataclass
class Enclosure:
    id: int
    polygon: Polygon


@dataclass
class EtcCell:
    id: int
    polygon: Polygon
    building_id: int
    enclosure_id: int
    nearest_street_id: int | None = None
    nearest_node_id: int | None = None
    nearest_edge_id: int | None = None
