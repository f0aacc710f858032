"""Cell contiguity graph and percentile-based contextual attributes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from shapely import STRtree

from .catalog import PERCENTILES, N_CONTEXTUAL


@dataclass
class ContiguityGraph:
    """Queen contiguity between cells: any shared boundary point is an edge."""

    n: int
    adjacency: list[list[int]] = field(default_factory=list)

    def neighbors_within(self, steps: int) -> list[np.ndarray]:
        """Per node, all nodes reachable in <= steps edges (self excluded)."""
        out = []
        for start in range(self.n):
            seen = {start}
            frontier = [start]
            for _ in range(steps):
                nxt = []
                for u in frontier:
                    for v in self.adjacency[u]:
                        if v not in seen:
                            seen.add(v)
                            nxt.append(v)
                frontier = nxt
                if not frontier:
                    break
            seen.discard(start)
            out.append(np.array(sorted(seen), dtype=int))
        return out


def build_contiguity(cell_polygons: list, tol: float = 1e-9) -> ContiguityGraph:
    n = len(cell_polygons)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    if n:
        tree = STRtree(cell_polygons)
        # dwithin with a hairline tolerance: clipping can leave ~1e-14 gaps
        # between cells that meet at a point across a street node.
        left, right = tree.query(cell_polygons, predicate="dwithin", distance=tol)
        for i, j in zip(left.tolist(), right.tolist()):
            if i < j:
                adjacency[i].append(j)
                adjacency[j].append(i)
    for lst in adjacency:
        lst.sort()
    return ContiguityGraph(n=n, adjacency=adjacency)


def contextualize(
    primary: np.ndarray,
    graph: ContiguityGraph,
    steps: int = 3,
    percentiles: tuple[int, ...] = PERCENTILES,
    include_focal: bool = True,
) -> np.ndarray:
    """Expand an (n_cells, n_metrics) matrix into percentile columns over
    <=`steps`-step neighborhoods. Missing values are ignored; a window with
    no observed values stays missing. Output column order is metric-major:
    (metric0_p25, metric0_p50, metric0_p75, metric1_p25, ...)."""
    n, d = primary.shape
    if graph.n != n:
        raise ValueError("graph size does not match matrix rows")
    out = np.full((n, d * len(percentiles)), np.nan)
    hoods = graph.neighbors_within(steps)
    q = np.array(percentiles, dtype=float)
    for i in range(n):
        members = np.append(hoods[i], i) if include_focal else hoods[i]
        if members.size == 0:
            continue
        window = primary[members]  # (m, d)
        counts = np.sum(~np.isnan(window), axis=0)
        with np.errstate(all="ignore"):
            pct = np.nanpercentile(window, q, axis=0)  # (3, d), linear interpolation
        pct[:, counts == 0] = np.nan
        out[i] = pct.T.ravel()
    assert out.shape[1] == d * len(percentiles)
    return out


def guard_contextual_width(matrix: np.ndarray) -> None:
    if matrix.shape[1] != N_CONTEXTUAL:
        raise ValueError(
            f"contextual matrix has {matrix.shape[1]} columns, expected {N_CONTEXTUAL}"
        )
