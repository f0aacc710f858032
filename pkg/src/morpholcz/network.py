"""Street network representation: noded segments plus the node graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import shapely
from shapely.geometry import LineString, Point

from .types import StreetSegment


def _node_key(coord: tuple[float, float], tol: float) -> tuple[float, float]:
    return (round(coord[0] / tol) * tol, round(coord[1] / tol) * tol)


@dataclass
class StreetNetwork:
    """Noded street segments and the endpoint graph they induce."""

    segments: list[StreetSegment]
    snap_tol: float = 0.1
    nodes: dict[int, tuple[float, float]] = field(default_factory=dict)
    graph: nx.MultiGraph = field(default_factory=nx.MultiGraph)

    def __post_init__(self):
        self._build_graph()

    def _build_graph(self) -> None:
        key_to_node: dict[tuple[float, float], int] = {}
        self.nodes = {}
        self.graph = nx.MultiGraph()
        for seg in self.segments:
            ends = [seg.line.coords[0], seg.line.coords[-1]]
            node_ids = []
            for end in ends:
                key = _node_key((end[0], end[1]), self.snap_tol)
                if key not in key_to_node:
                    nid = len(key_to_node)
                    key_to_node[key] = nid
                    self.nodes[nid] = key
                    self.graph.add_node(nid, x=key[0], y=key[1])
                node_ids.append(key_to_node[key])
            self.graph.add_edge(
                node_ids[0], node_ids[1], key=seg.id,
                segment_id=seg.id, length=seg.line.length,
            )

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def is_empty(self) -> bool:
        return not self.segments

    def segment_lines(self) -> list[LineString]:
        return [s.line for s in self.segments]

    def node_points(self) -> list[Point]:
        return [Point(*self.nodes[n]) for n in sorted(self.nodes)]

    def nodes_within_network_distance(self, node: int, radius: float) -> list[int]:
        """Node ids whose shortest network distance from `node` is <= radius."""
        lengths = nx.single_source_dijkstra_path_length(
            self.graph, node, cutoff=radius, weight="length"
        )
        return sorted(lengths)


def merge_degree2_chains(lines: list[LineString]) -> list[LineString]:
    """Node a set of lines at intersections and merge contiguous degree-2 chains."""
    if not lines:
        return []
    unioned = shapely.union_all(lines)
    merged = shapely.line_merge(unioned)
    parts = (
        [merged] if isinstance(merged, LineString) else list(merged.geoms)
    )
    parts = [p for p in parts if p.length > 0]
    # Deterministic ordering by geometry bytes keeps segment ids stable.
    parts.sort(key=lambda g: shapely.to_wkb(g))
    return parts


def line_orientation_deg(line: LineString) -> float:
    """Azimuth of the longer side of the minimum rotated rectangle, in [0, 90)."""
    from .metrics_shape import orientation_deg

    return orientation_deg(line)


def total_length(lines: list[LineString]) -> float:
    return float(np.sum([ln.length for ln in lines])) if lines else 0.0
