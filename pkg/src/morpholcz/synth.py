"""Deterministic synthetic city used as the desk-scale test site.

Four district templates with known LCZ-style labels:
compact_lowrise (3), open_lowrise (6), large_lowrise (8), sparse (9).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import LineString, Polygon, box

from .evaluation import ReferencePolygon
from .gridraster import GridGeometry, Raster

TEMPLATE_LCZ = {
    "compact_lowrise": 3,
    "open_lowrise": 6,
    "large_lowrise": 8,
    "sparse": 9,
}

# Per-band pseudo-spectral means by template; noise sigma added on top.
_BAND_BASE = {
    "compact_lowrise": 120.0,
    "open_lowrise": 80.0,
    "large_lowrise": 150.0,
    "sparse": 50.0,
}


@dataclass(frozen=True)
class DistrictSpec:
    template: str
    x0: float
    y0: float
    size: float = 500.0
    street_pitch: float = 100.0

    @property
    def polygon(self) -> Polygon:
        return box(self.x0, self.y0, self.x0 + self.size, self.y0 + self.size)

    @property
    def lcz(self) -> int:
        return TEMPLATE_LCZ[self.template]


def default_districts(size: float = 500.0) -> list[DistrictSpec]:
    """2x2 layout with the sparse district adjacent to open low-rise."""
    return [
        DistrictSpec("compact_lowrise", 0.0, size, size, street_pitch=62.5),
        DistrictSpec("large_lowrise", size, size, size, street_pitch=125.0),
        DistrictSpec("open_lowrise", 0.0, 0.0, size, street_pitch=100.0),
        DistrictSpec("sparse", size, 0.0, size, street_pitch=100.0),
    ]


def _rect(cx: float, cy: float, w: float, h: float) -> Polygon:
    return box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _blocks(d: DistrictSpec, margin: float = 5.0):
    """(column, row, interior rectangle) between grid streets."""
    edges = np.arange(d.x0, d.x0 + d.size + 1e-9, d.street_pitch)
    for i in range(len(edges) - 1):
        for j in range(len(edges) - 1):
            yield i, j, (
                edges[i] + margin,
                d.y0 + (edges[j] - d.x0) + margin,
                edges[i + 1] - margin,
                d.y0 + (edges[j + 1] - d.x0) - margin,
            )


def _compact_buildings(d: DistrictSpec, rng) -> list[Polygon]:
    """Rows of attached houses along the block."""
    out = []
    for _, _, (bx0, by0, bx1, by1) in _blocks(d):
        w, h = 9.0, 7.5
        n_per_row = int((bx1 - bx0) // w)
        for row_y in (by0 + h / 2 + 2.0, by1 - h / 2 - 2.0):
            x = bx0 + (bx1 - bx0 - n_per_row * w) / 2 + w / 2
            depth = h + rng.uniform(-0.5, 0.5)
            for _ in range(n_per_row):
                out.append(_rect(x, row_y, w, depth))
                x += w
    return out


def _open_block(rect, rng, spacing: float = 24.0) -> list[Polygon]:
    bx0, by0, bx1, by1 = rect
    out = []
    xs = np.arange(bx0 + spacing / 2, bx1, spacing)
    ys = np.arange(by0 + spacing / 2, by1, spacing)
    for x in xs:
        for y in ys:
            jx, jy = rng.uniform(-2.0, 2.0, 2)
            w = 10.0 + rng.uniform(-1.5, 1.5)
            h = 9.0 + rng.uniform(-1.5, 1.5)
            out.append(_rect(x + jx, y + jy, w, h))
    return out


def _open_buildings(d: DistrictSpec, rng) -> list[Polygon]:
    out = []
    for _, _, rect in _blocks(d):
        out.extend(_open_block(rect, rng))
    return out


def _large_buildings(d: DistrictSpec, rng) -> list[Polygon]:
    out = []
    for _, _, (bx0, by0, bx1, by1) in _blocks(d):
        cw, ch = (bx1 - bx0) / 2, (by1 - by0) / 2
        for x in (bx0 + cw / 2, bx0 + 3 * cw / 2):
            for y in (by0 + ch / 2, by0 + 3 * ch / 2):
                w = min(48.0, cw - 8.0) + rng.uniform(-3.0, 3.0)
                h = min(30.0, ch - 8.0) + rng.uniform(-3.0, 3.0)
                out.append(_rect(x, y, w, h))
    return out


def _sparse_buildings(d: DistrictSpec, rng) -> list[Polygon]:
    """Scattered houses, except for the westmost block column which follows
    the open template exactly: a settlement edge where sparsely labeled
    ground reads as open low-rise."""
    out = []
    for i, _, rect in _blocks(d):
        if i == 0:
            out.extend(_open_block(rect, rng))
            continue
        bx0, by0, bx1, by1 = rect
        spacing = 55.0
        xs = np.arange(bx0 + spacing / 2, bx1, spacing)
        ys = np.arange(by0 + spacing / 2, by1, spacing)
        for x in xs:
            for y in ys:
                if rng.uniform() < 0.2:
                    continue  # vacancy
                jx, jy = rng.uniform(-3.0, 3.0, 2)
                w = 10.0 + rng.uniform(-1.5, 1.5)
                h = 9.0 + rng.uniform(-1.5, 1.5)
                out.append(_rect(x + jx, y + jy, w, h))
    return out


_BUILDERS = {
    "compact_lowrise": _compact_buildings,
    "open_lowrise": _open_buildings,
    "large_lowrise": _large_buildings,
    "sparse": _sparse_buildings,
}


def _district_streets(d: DistrictSpec) -> list[LineString]:
    lines = []
    for t in np.arange(0.0, d.size + 1e-9, d.street_pitch):
        lines.append(LineString([(d.x0 + t, d.y0), (d.x0 + t, d.y0 + d.size)]))
        lines.append(LineString([(d.x0, d.y0 + t), (d.x0 + d.size, d.y0 + t)]))
    return lines


def _reference_polygons(districts: list[DistrictSpec], per_axis: int = 3) -> list[ReferencePolygon]:
    """Each district contributes a per_axis x per_axis grid of reference
    polygons so every class has enough samples for 5-fold stratification.

    The sparse district's settlement edge is digitized as one polygon, the
    way a surveyor would outline a homogeneous strip; under spatial
    cross-validation the fold testing it has no similar training sample."""
    refs = []
    rid = 0
    for d in districts:
        x_lo = d.x0
        if d.template == "sparse":
            edge = box(d.x0, d.y0, d.x0 + d.street_pitch, d.y0 + d.size)
            refs.append(ReferencePolygon(id=rid, polygon=edge, lcz=d.lcz))
            rid += 1
            x_lo = d.x0 + d.street_pitch
        sx = (d.x0 + d.size - x_lo) / per_axis
        sy = d.size / per_axis
        for i in range(per_axis):
            for j in range(per_axis):
                poly = box(
                    x_lo + i * sx, d.y0 + j * sy,
                    x_lo + (i + 1) * sx, d.y0 + (j + 1) * sy,
                )
                refs.append(ReferencePolygon(id=rid, polygon=poly, lcz=d.lcz))
                rid += 1
    return refs


def synth_city(
    districts: list[DistrictSpec] | None = None,
    seed: int = 0,
    n_bands: int = 10,
    noise_sigma: float = 5.0,
):
    """Deterministic site: building/street geometries, labeled reference
    polygons, a 10-band pseudo-raster and the study-area polygon."""
    if districts is None:
        districts = default_districts()
    for i, a in enumerate(districts):
        for b in districts[i + 1 :]:
            if a.polygon.intersection(b.polygon).area > 1e-9:
                raise ValueError(f"districts overlap: {a.template} / {b.template}")
    rng = np.random.default_rng(seed)

    buildings: list[Polygon] = []
    streets: list[LineString] = []
    for d in districts:
        buildings.extend(_BUILDERS[d.template](d, rng))
        streets.extend(_district_streets(d))

    reference = _reference_polygons(districts)

    xs = [d.x0 for d in districts] + [d.x0 + d.size for d in districts]
    ys = [d.y0 for d in districts] + [d.y0 + d.size for d in districts]
    study_area = box(min(xs), min(ys), max(xs), max(ys))

    px = 10.0
    width = int(round((max(xs) - min(xs)) / px))
    height = int(round((max(ys) - min(ys)) / px))
    grid = GridGeometry(
        origin_x=min(xs), origin_y=max(ys), pixel_size=px,
        width=width, height=height, crs="EPSG:32633",
    )
    gx, gy = np.meshgrid(*grid.pixel_centers())
    base = np.zeros((height, width))
    for d in districts:
        mask = (
            (gx >= d.x0) & (gx < d.x0 + d.size)
            & (gy >= d.y0) & (gy < d.y0 + d.size)
        )
        base[mask] = _BAND_BASE[d.template]
    data = np.empty((n_bands, height, width), dtype=np.float32)
    for b in range(n_bands):
        data[b] = base * (1.0 + 0.05 * b) + rng.normal(0.0, noise_sigma, base.shape)
    imagery = Raster(geometry=grid, data=data, band_names=[f"s{b}" for b in range(n_bands)])

    return buildings, streets, reference, imagery, study_area
