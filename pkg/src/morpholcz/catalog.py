"""Stable catalog of the 107 primary morphometric attributes.

Every entry names one column of the primary matrix: a measured property of
a building, tessellation cell, street segment or network node, at a fixed
neighborhood scale. Weighted variants (area-weighted neighborhood means)
are separate entries.
"""

from __future__ import annotations

from dataclasses import dataclass

N_PRIMARY = 107
PERCENTILES = (25, 50, 75)
N_CONTEXTUAL = N_PRIMARY * len(PERCENTILES)


@dataclass(frozen=True)
class MetricId:
    name: str
    element: str  # building | etc | street | node
    family: str  # dimension | shape | distribution | intensity | connectivity
    scale: str  # none | d20/d100/d200 | knn10/20/30 | topo1/2/3 | r5/r400


def _shape_dimension_entries() -> list[MetricId]:
    entries: list[MetricId] = []
    # (short name, family, buildings?, etcs?, weighted?)
    base = [
        ("area", "dimension", True, True, False),
        ("courtyard_area", "dimension", True, False, False),
        ("courtyard_index", "shape", True, False, False),
        ("perimeter_wall", "dimension", True, False, True),
        ("longest_axis", "dimension", True, True, True),
        ("circular_compactness", "shape", True, True, True),
        ("square_compactness", "shape", True, True, True),
        ("cwa", "dimension", True, True, True),
        ("convexity", "shape", True, True, True),
        ("elongation", "shape", True, True, True),
        ("eri", "shape", True, True, True),
        ("facade_ratio", "shape", True, True, True),
        ("fractal_dimension", "shape", True, True, True),
        ("rectangularity", "shape", True, True, True),
        ("shape_index", "shape", True, True, True),
    ]
    for name, family, on_bldg, on_etc, weighted in base:
        if on_bldg:
            entries.append(MetricId(f"bldg_{name}", "building", family, "none"))
        if on_etc:
            entries.append(MetricId(f"etc_{name}", "etc", family, "none"))
        if weighted:
            entries.append(MetricId(f"bldg_{name}_w100", "building", family, "d100"))
            entries.append(MetricId(f"bldg_{name}_w200", "building", family, "d200"))
            if on_etc:
                entries.append(MetricId(f"etc_{name}_wtopo3", "etc", family, "topo3"))
    return entries


def _distribution_intensity_entries() -> list[MetricId]:
    e: list[MetricId] = [
        MetricId("bldg_adjacency_d200", "building", "distribution", "d200"),
        MetricId("bldg_mean_interbuilding_distance_d200", "building", "distribution", "d200"),
        MetricId("bldg_shared_walls", "building", "distribution", "none"),
        MetricId("bldg_street_alignment", "building", "distribution", "none"),
        MetricId("bldg_street_alignment_w100", "building", "distribution", "d100"),
        MetricId("bldg_street_alignment_w200", "building", "distribution", "d200"),
        MetricId("etc_car", "etc", "intensity", "none"),
        MetricId("etc_car_wtopo3", "etc", "intensity", "topo3"),
        MetricId("etc_granularity_topo1", "etc", "intensity", "topo1"),
    ]
    for d in (20, 100, 200):
        e.append(MetricId(f"bldg_neighbors_d{d}", "building", "intensity", f"d{d}"))
    for t in (1, 2, 3):
        e.append(MetricId(f"etc_neighbors_topo{t}", "etc", "intensity", f"topo{t}"))
    for d in (20, 100, 200):
        e.append(MetricId(f"bldg_mean_nbr_dist_d{d}", "building", "distribution", f"d{d}"))
    for k in (10, 20, 30):
        e.append(MetricId(f"bldg_mean_nbr_dist_knn{k}", "building", "distribution", f"knn{k}"))
    for t in (2, 3):
        e.append(MetricId(f"etc_mean_nbr_dist_topo{t}", "etc", "distribution", f"topo{t}"))
    return e


def _street_connectivity_entries() -> list[MetricId]:
    e: list[MetricId] = [
        MetricId("street_length", "street", "dimension", "none"),
        MetricId("street_linearity", "street", "shape", "none"),
        MetricId("street_width", "street", "dimension", "none"),
        MetricId("street_width_dev", "street", "dimension", "none"),
        MetricId("street_openness", "street", "dimension", "none"),
        MetricId("node_degree", "node", "connectivity", "none"),
    ]
    for r in (5, 400):
        e.append(MetricId(f"node_mean_degree_r{r}", "node", "connectivity", f"r{r}"))
    e.append(MetricId("node_mean_distance", "node", "connectivity", "none"))
    for r in (5, 400):
        e.append(MetricId(f"node_density_r{r}", "node", "connectivity", f"r{r}"))
    e.append(MetricId("node_clustering", "node", "connectivity", "none"))
    for name in ("edge_node_ratio", "culdesac_length", "cyclomatic", "gamma", "meshedness"):
        for r in (5, 400):
            e.append(MetricId(f"node_{name}_r{r}", "node", "connectivity", f"r{r}"))
    return e


def catalog() -> list[MetricId]:
    entries = (
        _shape_dimension_entries()
        + _distribution_intensity_entries()
        + _street_connectivity_entries()
    )
    names = [m.name for m in entries]
    assert len(names) == len(set(names)), "duplicate metric names"
    assert len(entries) == N_PRIMARY, f"catalog drift: {len(entries)} != {N_PRIMARY}"
    return entries


def metric_names() -> list[str]:
    return [m.name for m in catalog()]


def contextual_names() -> list[str]:
    return [f"{m.name}_p{p}" for m in catalog() for p in PERCENTILES]
