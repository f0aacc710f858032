"""Spatial distribution and intensity attributes of buildings and cells."""

from __future__ import annotations

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely import STRtree

from .metrics_shape import street_alignment_deg


def centroids_of(geoms) -> np.ndarray:
    pts = shapely.centroid(np.asarray(geoms, dtype=object))
    return np.column_stack([shapely.get_x(pts), shapely.get_y(pts)])


def band_neighbors(centroids: np.ndarray, radius: float) -> list[np.ndarray]:
    """Indices within `radius` of each centroid, self excluded."""
    tree = cKDTree(centroids)
    hoods = tree.query_ball_point(centroids, r=radius)
    return [np.array(sorted(set(h) - {i}), dtype=int) for i, h in enumerate(hoods)]


def knn_neighbors(centroids: np.ndarray, k: int) -> list[np.ndarray]:
    """Indices of the k nearest other centroids (fewer when n - 1 < k)."""
    n = len(centroids)
    kk = min(k + 1, n)
    tree = cKDTree(centroids)
    _, idx = tree.query(centroids, k=kk)
    idx = np.atleast_2d(idx)
    out = []
    for i in range(n):
        row = [j for j in idx[i].tolist() if j != i][:k]
        out.append(np.array(row, dtype=int))
    return out


def touching_components(polys: list) -> np.ndarray:
    """Connected-component label per polygon under mutual contact."""
    n = len(polys)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if n:
        tree = STRtree(polys)
        left, right = tree.query(polys, predicate="intersects")
        for i, j in zip(left.tolist(), right.tolist()):
            if i < j:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(n)])


def building_adjacency(polys: list, hoods: list[np.ndarray]) -> np.ndarray:
    """Joined structures over buildings in the band (incl. self)."""
    labels = touching_components(polys)
    out = np.full(len(polys), np.nan)
    for i, idx in enumerate(hoods):
        members = np.append(idx, i)
        out[i] = len(np.unique(labels[members])) / members.size
    return out


def mean_interbuilding_distance(
    polys: list, centroids: np.ndarray, hoods: list[np.ndarray], band: float
) -> np.ndarray:
    """Mean footprint (edge-to-edge) distance over all pairs of band members."""
    n = len(polys)
    out = np.full(n, np.nan)
    if n < 2:
        return out
    # Pairs of band co-members are at most 2*band apart by centroid.
    kd = cKDTree(centroids)
    pairs = np.array(sorted(kd.query_pairs(2 * band)), dtype=int)
    dist = np.zeros((n, n), dtype=np.float64)
    if pairs.size:
        arr = np.asarray(polys, dtype=object)
        d = shapely.distance(arr[pairs[:, 0]], arr[pairs[:, 1]])
        dist[pairs[:, 0], pairs[:, 1]] = d
        dist[pairs[:, 1], pairs[:, 0]] = d
    for i, idx in enumerate(hoods):
        members = np.append(idx, i)
        m = members.size
        if m < 2:
            continue
        sub = dist[np.ix_(members, members)]
        out[i] = sub.sum() / (m * (m - 1))
    return out


def shared_walls(polys: list) -> np.ndarray:
    """Total boundary length each building shares with touching buildings."""
    n = len(polys)
    out = np.zeros(n)
    if n:
        tree = STRtree(polys)
        left, right = tree.query(polys, predicate="intersects")
        for i, j in zip(left.tolist(), right.tolist()):
            if i < j:
                shared = polys[i].intersection(polys[j]).length
                out[i] += shared
                out[j] += shared
    return out


def street_alignments(
    building_orientations: np.ndarray,
    street_orientations_by_id: dict[int, float],
    nearest_street_ids: list[int | None],
) -> np.ndarray:
    out = np.full(len(building_orientations), np.nan)
    for i, sid in enumerate(nearest_street_ids):
        if sid is None or np.isnan(building_orientations[i]):
            continue
        so = street_orientations_by_id.get(sid)
        if so is None or np.isnan(so):
            continue
        out[i] = street_alignment_deg(building_orientations[i], so)
    return out


def neighbor_counts(hoods: list[np.ndarray]) -> np.ndarray:
    return np.array([len(idx) for idx in hoods], dtype=float)


def mean_neighbor_distance(centroids: np.ndarray, hoods: list[np.ndarray]) -> np.ndarray:
    """Mean centroid-to-centroid distance to the neighborhood; missing when empty."""
    out = np.full(len(hoods), np.nan)
    for i, idx in enumerate(hoods):
        if idx.size:
            d = np.hypot(*(centroids[idx] - centroids[i]).T)
            out[i] = float(d.mean())
    return out


def coverage_area_ratio(building_areas: np.ndarray, cell_areas: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cell_areas > 0, building_areas / cell_areas, np.nan)


def granularity(cell_areas: np.ndarray, topo1: list[np.ndarray]) -> np.ndarray:
    """Summed cell area within one topological step (incl. the cell itself)."""
    out = np.empty(len(cell_areas))
    for i, idx in enumerate(topo1):
        out[i] = cell_areas[i] + cell_areas[idx].sum()
    return out
