"""Undirected road graph with Dijkstra routing, polyline geometry and charger reach.

Coordinates are planar kilometres, edge lengths are miles, buffer distances
are metres.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyPath, InvalidGraph, NoPath, UnknownNode

KM_PER_MILE = 1.609344
TIE_TOL = 1e-9

NodeId = Hashable


@dataclass(frozen=True)
class Path:
    node_sequence: tuple
    total_length: float

    def __len__(self) -> int:
        return len(self.node_sequence)


class RoadGraph:
    """Immutable weighted undirected graph.

    Nodes are kept in sorted-id order; ``index[node_id]`` gives the dense
    position used by the distance caches.
    """

    def __init__(
        self,
        nodes: Iterable[tuple[NodeId, float, float]],
        edges: Iterable[tuple[NodeId, NodeId, float]],
        charger_at_node: Mapping[NodeId, Hashable] | None = None,
    ):
        coords = {}
        for nid, x, y in nodes:
            if nid in coords:
                raise InvalidGraph(f"duplicate node id {nid!r}")
            coords[nid] = (float(x), float(y))
        self.node_ids: list = sorted(coords)
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        self.xy = np.array([coords[n] for n in self.node_ids], dtype=float).reshape(-1, 2)

        best: dict[tuple[int, int], float] = {}
        for a, b, length in edges:
            if a not in self.index or b not in self.index:
                raise InvalidGraph(f"edge ({a!r}, {b!r}) references a missing node")
            if a == b:
                raise InvalidGraph(f"self-loop at {a!r}")
            length = float(length)
            if not length > 0 or not math.isfinite(length):
                raise InvalidGraph(f"edge ({a!r}, {b!r}) has non-positive length {length}")
            i, j = sorted((self.index[a], self.index[b]))
            euclid_mi = float(np.hypot(*(self.xy[i] - self.xy[j]))) / KM_PER_MILE
            if length < euclid_mi - 1e-9:
                raise InvalidGraph(
                    f"edge ({a!r}, {b!r}) length {length} shorter than straight line {euclid_mi}"
                )
            best[(i, j)] = min(length, best.get((i, j), math.inf))

        self.adj: list[list[tuple[int, float]]] = [[] for _ in self.node_ids]
        for (i, j), w in best.items():
            self.adj[i].append((j, w))
            self.adj[j].append((i, w))
        for nbrs in self.adj:
            nbrs.sort()
        self._edge_len = {(i, j): w for (i, j), w in best.items()}

        self.charger_at_node: dict = {}
        for nid, cid in (charger_at_node or {}).items():
            if nid not in self.index:
                raise InvalidGraph(f"charger {cid!r} placed on missing node {nid!r}")
            self.charger_at_node[nid] = cid

    # -- basic queries -------------------------------------------------
    def __contains__(self, node_id) -> bool:
        return node_id in self.index

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def coords(self, node_id) -> tuple[float, float]:
        x, y = self.xy[self._idx(node_id)]
        return float(x), float(y)

    def edge_length(self, a, b) -> float:
        i, j = sorted((self._idx(a), self._idx(b)))
        try:
            return self._edge_len[(i, j)]
        except KeyError:
            raise NoPath(f"no edge between {a!r} and {b!r}") from None

    def edges(self) -> list[tuple]:
        return [(self.node_ids[i], self.node_ids[j], w) for (i, j), w in sorted(self._edge_len.items())]

    def neighbors(self, node_id) -> list[tuple]:
        return [(self.node_ids[j], w) for j, w in self.adj[self._idx(node_id)]]

    def _idx(self, node_id) -> int:
        try:
            return self.index[node_id]
        except (KeyError, TypeError):
            raise UnknownNode(f"unknown node {node_id!r}") from None

    def with_chargers(self, charger_at_node: Mapping) -> "RoadGraph":
        nodes = [(n, *self.xy[i]) for i, n in enumerate(self.node_ids)]
        return RoadGraph(nodes, self.edges(), charger_at_node)

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n, "x_km": float(self.xy[i, 0]), "y_km": float(self.xy[i, 1])}
                for i, n in enumerate(self.node_ids)
            ],
            "edges": [{"a": a, "b": b, "length_mi": w} for a, b, w in self.edges()],
            "chargers": [
                {"node_id": n, "charger_id": c} for n, c in sorted(self.charger_at_node.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RoadGraph":
        try:
            nodes = [(d["id"], d["x_km"], d["y_km"]) for d in data["nodes"]]
            edges = [(d["a"], d["b"], d["length_mi"]) for d in data["edges"]]
            chargers = {d["node_id"]: d["charger_id"] for d in data.get("chargers", [])}
        except (KeyError, TypeError) as exc:
            raise InvalidGraph(f"malformed graph document: {exc}") from None
        return cls(nodes, edges, chargers)

    @classmethod
    def load(cls, path) -> "RoadGraph":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


# -- Dijkstra ------------------------------------------------------------

def _dijkstra(graph: RoadGraph, source: int, cutoff: float = math.inf) -> np.ndarray:
    dist = np.full(graph.n_nodes, math.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(graph.n_nodes, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in graph.adj[u]:
            nd = d + w
            if nd < dist[v] and nd <= cutoff:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def distances_from(graph: RoadGraph, source, cutoff: float = math.inf) -> dict:
    """Shortest-path length from ``source`` to every node within ``cutoff``."""
    dist = _dijkstra(graph, graph._idx(source), cutoff)
    return {graph.node_ids[i]: float(d) for i, d in enumerate(dist) if math.isfinite(d)}


def distance_matrix(graph: RoadGraph) -> np.ndarray:
    """All-pairs shortest-path lengths, rows and columns in ``graph.node_ids`` order."""
    return np.vstack([_dijkstra(graph, i) for i in range(graph.n_nodes)]) if graph.n_nodes else np.zeros((0, 0))


def _trace(graph: RoadGraph, o: int, d: int, to_dest: np.ndarray) -> Path:
    # greedy walk along tight edges, smallest node id first => lexicographic minimum
    total = to_dest[o]
    seq = [o]
    length = 0.0
    u = o
    while u != d:
        for v, w in graph.adj[u]:  # sorted by dense index == sorted by node id
            if abs(w + to_dest[v] - to_dest[u]) <= TIE_TOL and to_dest[v] < to_dest[u]:
                break
        else:  # pragma: no cover - guarded by finite distance
            raise NoPath("inconsistent distance field")
        seq.append(v)
        length += w
        u = v
    assert abs(length - total) <= TIE_TOL * max(1, len(seq))
    return Path(tuple(graph.node_ids[i] for i in seq), length)


def shortest_path(graph: RoadGraph, origin, dest) -> Path:
    """Minimum-length path; among equal-length paths the lexicographically
    smallest node sequence wins."""
    o, d = graph._idx(origin), graph._idx(dest)
    to_dest = _dijkstra(graph, d)
    if not math.isfinite(to_dest[o]):
        raise NoPath(f"{dest!r} unreachable from {origin!r}")
    return _trace(graph, o, d, to_dest)


def path_from_matrix(graph: RoadGraph, dist: np.ndarray, origin, dest) -> Path:
    """``shortest_path`` reusing a precomputed ``distance_matrix`` (symmetric graph)."""
    o, d = graph._idx(origin), graph._idx(dest)
    if not math.isfinite(dist[o, d]):
        raise NoPath(f"{dest!r} unreachable from {origin!r}")
    return _trace(graph, o, d, dist[d])


def next_hop(graph: RoadGraph, dist: np.ndarray, node, dest):
    """First step of ``shortest_path(node, dest)`` from a distance matrix."""
    u, d = graph._idx(node), graph._idx(dest)
    row = dist[d]
    if not math.isfinite(row[u]):
        raise NoPath(f"{dest!r} unreachable from {node!r}")
    for v, w in graph.adj[u]:
        if abs(w + row[v] - row[u]) <= TIE_TOL and row[v] < row[u]:
            return graph.node_ids[v], w
    raise NoPath(f"already at {dest!r}")


# -- geometry ------------------------------------------------------------

def path_xy(graph: RoadGraph, path: Path) -> np.ndarray:
    return graph.xy[[graph._idx(n) for n in path.node_sequence]]


def _point_segments_km(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from point(s) ``p`` to segments ``a``-``b`` (broadcast)."""
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(*np.moveaxis(p - proj, -1, 0))


def point_polyline_km(point: Sequence[float], poly: np.ndarray) -> float:
    p = np.asarray(point, dtype=float)
    if len(poly) == 0:
        raise EmptyPath("zero-node path")
    if len(poly) == 1:
        return float(np.hypot(*(p - poly[0])))
    return float(_point_segments_km(p, poly[:-1], poly[1:]).min())


def distance_to_path(point: Sequence[float], path: Path, graph: RoadGraph) -> float:
    """Metres from a planar point (km) to the path polyline."""
    if len(path.node_sequence) == 0:
        raise EmptyPath("zero-node path")
    return 1000.0 * point_polyline_km(point, path_xy(graph, path))


def _segments_cross(a0, a1, b0, b1) -> np.ndarray:
    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def polyline_distance_km(pa: np.ndarray, pb: np.ndarray) -> float:
    """Minimum distance between two polylines (vertices plus segment interiors)."""
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyPath("zero-node path")
    if len(pa) == 1:
        return point_polyline_km(pa[0], pb)
    if len(pb) == 1:
        return point_polyline_km(pb[0], pa)
    a0, a1 = pa[:-1, None, :], pa[1:, None, :]
    b0, b1 = pb[None, :-1, :], pb[None, 1:, :]
    if _segments_cross(a0, a1, b0, b1).any():
        return 0.0
    d = np.minimum.reduce([
        _point_segments_km(a0, b0, b1),
        _point_segments_km(a1, b0, b1),
        _point_segments_km(b0, a0, a1),
        _point_segments_km(b1, a0, a1),
    ])
    return float(d.min())


# -- charger reach ---------------------------------------------------------

def reachable_chargers(graph: RoadGraph, position, range_mi: float) -> set:
    """Chargers whose network distance from ``position`` is at most ``range_mi``."""
    if range_mi < 0:
        raise ValueError("range must be non-negative")
    dist = _dijkstra(graph, graph._idx(position), cutoff=range_mi)
    return {
        cid for nid, cid in graph.charger_at_node.items() if dist[graph.index[nid]] <= range_mi
    }
