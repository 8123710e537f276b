"""Road graphs with directed edges, shortest paths and a plain-text file format."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

from ..errors import ModelError

ROADS_HEADER = "hdmn-roads/1"


@dataclass
class RoadGraph:
    """Intersections with planar coordinates and directed road segments.

    Each edge ``k`` runs from ``edges[k][0]`` (s1) to ``edges[k][1]`` (s2);
    a two-way street is two edges.  Offsets along an edge are metres from s1.
    """

    coords: np.ndarray
    edges: list[tuple[int, int]]
    lengths: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        self.edges = [(int(a), int(b)) for a, b in self.edges]
        nv = len(self.coords)
        for a, b in self.edges:
            if not (0 <= a < nv and 0 <= b < nv) or a == b:
                raise ModelError(f"edge ({a}, {b}) has invalid endpoints")
        if len(set(self.edges)) != len(self.edges):
            raise ModelError("duplicate directed edge")
        if self.lengths is None:
            self.lengths = np.array([np.linalg.norm(self.coords[b] - self.coords[a]) for a, b in self.edges])
        self.lengths = np.asarray(self.lengths, dtype=float)
        if len(self.lengths) != len(self.edges) or np.any(self.lengths <= 0):
            raise ModelError("edge lengths must be positive, one per edge")
        if nv and not nx.is_weakly_connected(self.digraph()):
            raise ModelError("road graph must be connected")

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def digraph(self, lengths: np.ndarray | None = None) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from(range(self.n_vertices))
        ln = self.lengths if lengths is None else lengths
        for k, (a, b) in enumerate(self.edges):
            G.add_edge(a, b, length=float(ln[k]), edge=k)
        return G

    @cached_property
    def successors(self) -> list[list[int]]:
        """Edges that can follow edge ``k`` (those leaving its end vertex)."""
        out_of = {v: [] for v in range(self.n_vertices)}
        for k, (a, _) in enumerate(self.edges):
            out_of[a].append(k)
        return [sorted(out_of[b]) for _, b in self.edges]

    def adjacent(self, e_prev: int, e: int) -> bool:
        return e == e_prev or e in self.successors[e_prev]

    def direction(self, k: int) -> np.ndarray:
        a, b = self.edges[k]
        return (self.coords[b] - self.coords[a]) / self.lengths[k]

    def position(self, k: int, offset: float) -> np.ndarray:
        return self.coords[self.edges[k][0]] + offset * self.direction(k)

    def vertex_distances(self, lengths: np.ndarray | None = None) -> np.ndarray:
        """All-pairs shortest path lengths between vertices (inf if unreachable)."""
        G = self.digraph(lengths)
        D = np.full((self.n_vertices, self.n_vertices), np.inf)
        for s, dist in nx.all_pairs_dijkstra_path_length(G, weight="length"):
            for t, d in dist.items():
                D[s, t] = d
        return D

    def shortest_edge_path(self, src: int, dst: int, lengths: np.ndarray | None = None) -> list[int]:
        """Edge ids along a shortest path between two vertices."""
        G = self.digraph(lengths)
        nodes = nx.dijkstra_path(G, src, dst, weight="length")
        return [G.edges[a, b]["edge"] for a, b in zip(nodes, nodes[1:])]

    def nearest_edge(self, point: Sequence[float]) -> tuple[int, float]:
        """(edge, offset) of the closest point on any edge."""
        p = np.asarray(point, dtype=float)
        best = (0, 0.0, np.inf)
        for k, (a, _) in enumerate(self.edges):
            u = self.direction(k)
            off = float(np.clip((p - self.coords[a]) @ u, 0.0, self.lengths[k]))
            d = float(np.linalg.norm(self.coords[a] + off * u - p))
            if d < best[2] - 1e-12:
                best = (k, off, d)
        return best[0], best[1]


def grid_graph(nx_: int = 3, ny: int = 3, spacing: float = 200.0) -> RoadGraph:
    """Manhattan grid of two-way streets; vertex ``i + nx_ * j`` sits at ``(i, j) * spacing``."""
    coords = [(i * spacing, j * spacing) for j in range(ny) for i in range(nx_)]
    edges = []
    for j in range(ny):
        for i in range(nx_):
            v = i + nx_ * j
            if i + 1 < nx_:
                edges += [(v, v + 1), (v + 1, v)]
            if j + 1 < ny:
                edges += [(v, v + nx_), (v + nx_, v)]
    return RoadGraph(np.array(coords), edges)


def write_roads(graph: RoadGraph, path: str | Path) -> None:
    """Plain text: header line, then ``v <id> <x> <y>`` and ``e <id> <s1> <s2> <length>`` lines."""
    lines = [ROADS_HEADER]
    for k, (x, y) in enumerate(graph.coords):
        lines.append(f"v {k} {float(x)!r} {float(y)!r}")
    for k, ((a, b), ln) in enumerate(zip(graph.edges, graph.lengths)):
        lines.append(f"e {k} {a} {b} {float(ln)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_roads(path: str | Path) -> RoadGraph:
    text = Path(path).read_text().splitlines()
    rows = [ln.split("#", 1)[0].split() for ln in text]
    rows = [r for r in rows if r]
    if not rows or rows[0] != [ROADS_HEADER]:
        raise ModelError(f"{path}: missing '{ROADS_HEADER}' header")
    verts, edges = {}, {}
    for r in rows[1:]:
        try:
            if r[0] == "v" and len(r) == 4:
                verts[int(r[1])] = (float(r[2]), float(r[3]))
            elif r[0] == "e" and len(r) in (4, 5):
                edges[int(r[1])] = (int(r[2]), int(r[3]), float(r[4]) if len(r) == 5 else None)
            else:
                raise ValueError
        except ValueError:
            raise ModelError(f"{path}: bad line {' '.join(r)!r}") from None
    if sorted(verts) != list(range(len(verts))) or sorted(edges) != list(range(len(edges))):
        raise ModelError(f"{path}: vertex and edge ids must be 0..n-1")
    coords = np.array([verts[k] for k in range(len(verts))])
    el = [edges[k] for k in range(len(edges))]
    lengths = None
    if all(e[2] is not None for e in el):
        lengths = np.array([e[2] for e in el])
    return RoadGraph(coords, [(a, b) for a, b, _ in el], lengths)
