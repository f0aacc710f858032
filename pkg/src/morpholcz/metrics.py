"""Computation and assembly of the primary morphometric matrix."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import N_PRIMARY, catalog, metric_names
from .context import build_contiguity
from .metrics_distribution import (
    band_neighbors,
    building_adjacency,
    centroids_of,
    coverage_area_ratio,
    granularity,
    knn_neighbors,
    mean_interbuilding_distance,
    mean_neighbor_distance,
    neighbor_counts,
    shared_walls,
    street_alignments,
)
from .metrics_shape import area_weighted, orientation_deg, shape_dimension_metrics
from .metrics_streets import node_columns, street_columns
from .network import StreetNetwork
from .types import Building, EtcCell

WEIGHTED_SHAPE_METRICS = (
    "longest_axis", "circular_compactness", "square_compactness", "cwa",
    "convexity", "elongation", "eri", "facade_ratio", "fractal_dimension",
    "rectangularity", "shape_index",
)


@dataclass
class PrimaryMatrix:
    cell_ids: list[int]
    names: list[str]
    values: np.ndarray  # (n_cells, 107)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_id"] + self.names)
            for cid, row in zip(self.cell_ids, self.values):
                writer.writerow([cid] + [("" if np.isnan(v) else repr(float(v))) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "PrimaryMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            names = header[1:]
            cell_ids, rows = [], []
            for rec in reader:
                cell_ids.append(int(rec[0]))
                rows.append([float(v) if v else np.nan for v in rec[1:]])
        return cls(cell_ids=cell_ids, names=names, values=np.asarray(rows, dtype=float))


def write_catalog_json(path: str | Path) -> None:
    doc = [
        {"name": m.name, "element": m.element, "family": m.family, "scale": m.scale}
        for m in catalog()
    ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def compute_building_columns(
    buildings: list[Building],
    nearest_street_ids: list[int | None],
    street_orientations: dict[int, float],
) -> dict[str, np.ndarray]:
    polys = [b.footprint for b in buildings]
    cols = shape_dimension_metrics(polys, "bldg")
    centroids = centroids_of(polys)
    areas = cols["bldg_area"]
    bands = {d: band_neighbors(centroids, d) for d in (20, 100, 200)}

    for name in ("perimeter_wall",) + WEIGHTED_SHAPE_METRICS:
        for d in (100, 200):
            cols[f"bldg_{name}_w{d}"] = area_weighted(
                cols[f"bldg_{name}"], areas, bands[d]
            )

    cols["bldg_adjacency_d200"] = building_adjacency(polys, bands[200])
    cols["bldg_mean_interbuilding_distance_d200"] = mean_interbuilding_distance(
        polys, centroids, bands[200], 200.0
    )
    cols["bldg_shared_walls"] = shared_walls(polys)

    orientations = np.array([orientation_deg(p) for p in polys])
    alignment = street_alignments(orientations, street_orientations, nearest_street_ids)
    cols["bldg_street_alignment"] = alignment
    for d in (100, 200):
        cols[f"bldg_street_alignment_w{d}"] = area_weighted(alignment, areas, bands[d])

    for d in (20, 100, 200):
        cols[f"bldg_neighbors_d{d}"] = neighbor_counts(bands[d])
        cols[f"bldg_mean_nbr_dist_d{d}"] = mean_neighbor_distance(centroids, bands[d])
    for k in (10, 20, 30):
        cols[f"bldg_mean_nbr_dist_knn{k}"] = mean_neighbor_distance(
            centroids, knn_neighbors(centroids, k)
        )
    return cols


def compute_cell_columns(
    cells: list[EtcCell], buildings: list[Building]
) -> dict[str, np.ndarray]:
    polys = [c.polygon for c in cells]
    cols = shape_dimension_metrics(polys, "etc")
    cell_areas = cols["etc_area"]
    graph = build_contiguity(polys)
    topo = {t: graph.neighbors_within(t) for t in (1, 2, 3)}

    for name in WEIGHTED_SHAPE_METRICS:
        cols[f"etc_{name}_wtopo3"] = area_weighted(cols[f"etc_{name}"], cell_areas, topo[3])

    by_id = {b.id: b for b in buildings}
    bldg_areas = np.array([by_id[c.building_id].area for c in cells])
    car = coverage_area_ratio(bldg_areas, cell_areas)
    cols["etc_car"] = car
    cols["etc_car_wtopo3"] = area_weighted(car, cell_areas, topo[3])
    cols["etc_granularity_topo1"] = granularity(cell_areas, topo[1])

    centroids = centroids_of(polys)
    for t in (1, 2, 3):
        cols[f"etc_neighbors_topo{t}"] = neighbor_counts(topo[t])
    for t in (2, 3):
        cols[f"etc_mean_nbr_dist_topo{t}"] = mean_neighbor_distance(centroids, topo[t])
    return cols


def assemble_primary(
    cells: list[EtcCell],
    buildings: list[Building],
    network: StreetNetwork | None,
) -> PrimaryMatrix:
    """Compute all 107 attributes and join them onto cells."""
    order = sorted(cells, key=lambda c: c.id)
    bldg_index = {b.id: i for i, b in enumerate(buildings)}

    street_orientations: dict[int, float] = {}
    if network is not None and not network.is_empty:
        street_orientations = {
            s.id: orientation_deg(s.line) for s in network.segments
        }
    nearest_by_building = {c.building_id: c.nearest_street_id for c in order}
    nearest_street_ids = [nearest_by_building.get(b.id) for b in buildings]

    bldg_cols = compute_building_columns(buildings, nearest_street_ids, street_orientations)
    cell_cols = compute_cell_columns(order, buildings)

    street_cols: dict[str, np.ndarray] = {}
    node_cols: dict[str, np.ndarray] = {}
    seg_index: dict[int, int] = {}
    node_index: dict[int, int] = {}
    if network is not None and not network.is_empty:
        street_cols = street_columns(network, [b.footprint for b in buildings])
        node_cols = node_columns(network)
        seg_index = {s.id: i for i, s in enumerate(network.segments)}
        node_index = {nid: i for i, nid in enumerate(sorted(network.nodes))}

    n = len(order)
    names = metric_names()
    values = np.full((n, len(names)), np.nan)
    produced = set(bldg_cols) | set(cell_cols) | set(street_cols) | set(node_cols)
    missing = [m for m in names if m not in produced]
    if missing or len(produced) != N_PRIMARY:
        raise ValueError(
            f"metric catalog drift: {len(produced)} columns produced, missing {missing}"
        )

    for j, name in enumerate(names):
        if name in cell_cols:
            values[:, j] = cell_cols[name]
        elif name in bldg_cols:
            col = bldg_cols[name]
            for i, cell in enumerate(order):
                values[i, j] = col[bldg_index[cell.building_id]]
        elif name in street_cols:
            col = street_cols[name]
            for i, cell in enumerate(order):
                if cell.nearest_street_id is not None:
                    values[i, j] = col[seg_index[cell.nearest_street_id]]
        else:
            col = node_cols[name]
            for i, cell in enumerate(order):
                if cell.nearest_node_id is not None:
                    values[i, j] = col[node_index[cell.nearest_node_id]]
    return PrimaryMatrix(cell_ids=[c.id for c in order], names=names, values=values)
