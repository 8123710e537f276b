"""Goal discovery from long stops in a trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roads import RoadGraph

DWELL_THRESHOLD = 15 * 60.0
CLUSTER_RADIUS = 50.0
STOP_SPEED = 0.5


@dataclass
class GoalSet:
    """Discovered goals: cluster centres, their stop points and covering edge sets."""

    centers: np.ndarray
    members: list[list[int]]
    edges: list[frozenset]

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def empty(self) -> bool:
        return len(self) == 0


def dwell_segments(speed: np.ndarray, dt: float, dwell_threshold: float = DWELL_THRESHOLD,
                   stop_speed: float = STOP_SPEED) -> list[tuple[int, int]]:
    """Maximal runs ``[start, stop)`` with speed below ``stop_speed`` lasting at least the threshold."""
    slow = np.asarray(speed) < stop_speed
    out, start = [], None
    for t, s in enumerate(np.append(slow, False)):
        if s and start is None:
            start = t
        elif not s and start is not None:
            if (t - start) * dt >= dwell_threshold:
                out.append((start, t))
            start = None
    return out


def single_linkage(points: np.ndarray, radius: float) -> list[list[int]]:
    """Connected components of the "within ``radius``" graph, ordered by first member."""
    n = len(points)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if np.linalg.norm(points[a] - points[b]) <= radius:
                parent[find(b)] = find(a)
    groups: dict[int, list[int]] = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    return sorted(groups.values(), key=lambda g: g[0])


def covering_edges(graph: RoadGraph, points: np.ndarray, radius: float) -> frozenset:
    """Edges passing within ``radius`` of any point, or the nearest edge of each point."""
    out = set()
    for p in points:
        k, _ = graph.nearest_edge(p)
        out.add(k)
        for e, (a, _) in enumerate(graph.edges):
            u = graph.direction(e)
            off = float(np.clip((p - graph.coords[a]) @ u, 0.0, graph.lengths[e]))
            if np.linalg.norm(graph.coords[a] + off * u - p) <= radius:
                out.add(e)
    return frozenset(out)


def extract_goals(x, y, speed, dt: float, graph: RoadGraph | None = None,
                  dwell_threshold: float = DWELL_THRESHOLD, cluster_radius: float = CLUSTER_RADIUS,
                  stop_speed: float = STOP_SPEED, edge_radius: float = 0.0) -> GoalSet:
    """Candidate stops (mean position of each long dwell) merged by single linkage.

    With a road graph each goal also gets the edges within ``edge_radius``
    of its stops (at least the nearest edge).  A trace without long stops
    yields an empty set.
    """
    x, y, speed = (np.asarray(a, dtype=float) for a in (x, y, speed))
    if len(x) == 0:
        raise ValueError("trace must be nonempty")
    segs = dwell_segments(speed, dt, dwell_threshold, stop_speed)
    pts = np.array([[x[a:b].mean(), y[a:b].mean()] for a, b in segs]).reshape(-1, 2)
    groups = single_linkage(pts, cluster_radius)
    centers = np.array([pts[g].mean(axis=0) for g in groups]).reshape(-1, 2)
    edges = [covering_edges(graph, pts[g], edge_radius) for g in groups] if graph is not None else []
    return GoalSet(centers, groups, edges)
