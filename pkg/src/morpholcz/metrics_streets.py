"""Street profile, street descriptors and node connectivity attributes."""

from __future__ import annotations

import numpy as np
import networkx as nx
import shapely
from shapely import STRtree
from shapely.geometry import LineString, Point

from .network import StreetNetwork

TICK_LEN = 50.0
TICK_SPACING = 10.0
NETWORK_RADII = (5.0, 400.0)


def street_profile(
    line: LineString,
    building_tree: STRtree | None,
    buildings: list,
    tick_len: float = TICK_LEN,
    tick_spacing: float = TICK_SPACING,
) -> tuple[float, float, float]:
    """(width, width_deviation, openness) from perpendicular ray casting."""
    length = line.length
    stations = [s for s in np.arange(tick_spacing, length, tick_spacing)]
    if not stations:
        stations = [length / 2]
    half = tick_len / 2
    widths, hits, rays = [], 0, 0
    for s in stations:
        p = line.interpolate(s)
        eps = min(0.5, length / 4)
        a = line.interpolate(max(0.0, s - eps))
        b = line.interpolate(min(length, s + eps))
        tangent = np.array([b.x - a.x, b.y - a.y])
        norm = np.hypot(*tangent)
        if norm == 0:
            continue
        tangent /= norm
        normal = np.array([-tangent[1], tangent[0]])
        reach_sum = 0.0
        for side in (1.0, -1.0):
            rays += 1
            tip = (p.x + side * normal[0] * half, p.y + side * normal[1] * half)
            ray = LineString([(p.x, p.y), tip])
            reach = half
            hit = False
            if building_tree is not None:
                for idx in building_tree.query(ray, predicate="intersects"):
                    inter = ray.intersection(buildings[int(idx)])
                    if not inter.is_empty:
                        d = p.distance(inter)
                        if d < reach:
                            reach = d
                        hit = True
            if hit:
                hits += 1
            reach_sum += reach
        widths.append(reach_sum)
    if not widths:
        return float("nan"), float("nan"), float("nan")
    widths = np.asarray(widths)
    openness = 1.0 - hits / rays if rays else float("nan")
    return float(widths.mean()), float(widths.std()), float(openness)


def street_columns(
    network: StreetNetwork,
    building_polys: list,
    tick_len: float = TICK_LEN,
    tick_spacing: float = TICK_SPACING,
) -> dict[str, np.ndarray]:
    """Per-segment length, linearity and ray-cast profile, indexed by segment id."""
    tree = STRtree(building_polys) if building_polys else None
    n = len(network.segments)
    length = np.empty(n)
    linearity = np.empty(n)
    width = np.empty(n)
    width_dev = np.empty(n)
    openness = np.empty(n)
    for k, seg in enumerate(network.segments):
        length[k] = seg.line.length
        chord = Point(seg.line.coords[0]).distance(Point(seg.line.coords[-1]))
        linearity[k] = chord / seg.line.length if seg.line.length > 0 else np.nan
        width[k], width_dev[k], openness[k] = street_profile(
            seg.line, tree, building_polys, tick_len, tick_spacing
        )
    return {
        "street_length": length,
        "street_linearity": linearity,
        "street_width": width,
        "street_width_dev": width_dev,
        "street_openness": openness,
    }


def node_columns(
    network: StreetNetwork, radii: tuple[float, ...] = NETWORK_RADII
) -> dict[str, np.ndarray]:
    """Per-node connectivity attributes, indexed by node id order."""
    g = network.graph
    node_ids = sorted(network.nodes)
    n = len(node_ids)
    cols: dict[str, np.ndarray] = {
        "node_degree": np.array([g.degree(u) for u in node_ids], dtype=float),
        "node_mean_distance": np.full(n, np.nan),
        "node_clustering": np.full(n, np.nan),
    }
    simple = nx.Graph(g)
    sq = nx.square_clustering(simple)
    for k, u in enumerate(node_ids):
        lengths = [d["length"] for _, _, d in g.edges(u, data=True)]
        if lengths:
            cols["node_mean_distance"][k] = float(np.mean(lengths))
        cols["node_clustering"][k] = sq.get(u, np.nan)

    subgraph_metrics = (
        "mean_degree", "density", "edge_node_ratio",
        "culdesac_length", "cyclomatic", "gamma", "meshedness",
    )
    for r in radii:
        tag = f"r{int(r)}"
        arrays = {m: np.full(n, np.nan) for m in subgraph_metrics}
        for k, u in enumerate(node_ids):
            members = network.nodes_within_network_distance(u, r)
            if len(members) <= 1:
                continue  # single-node subgraph: metrics undefined
            sub = g.subgraph(members)
            v = sub.number_of_nodes()
            e = sub.number_of_edges()
            p = nx.number_connected_components(sub)
            degrees = np.array([d for _, d in sub.degree()], dtype=float)
            total_len = sum(d["length"] for _, _, d in sub.edges(data=True))
            arrays["mean_degree"][k] = degrees.mean()
            if total_len > 0:
                arrays["density"][k] = v / (total_len / 1000.0)
            arrays["edge_node_ratio"][k] = e / v
            deg1 = {node for node, d in sub.degree() if d == 1}
            arrays["culdesac_length"][k] = sum(
                d["length"] for a, b, d in sub.edges(data=True) if a in deg1 or b in deg1
            )
            arrays["cyclomatic"][k] = e - v + p
            if v >= 3:
                arrays["gamma"][k] = e / (3 * (v - 2))
                arrays["meshedness"][k] = (e - v + 1) / (2 * v - 5)
        for m in subgraph_metrics:
            name = {"density": "node_density", "culdesac_length": "node_culdesac_length"}.get(
                m, f"node_{m}"
            )
            cols[f"{name}_{tag}"] = arrays[m]
    return cols
