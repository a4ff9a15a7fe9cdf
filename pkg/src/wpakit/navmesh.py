"""Navigation meshes as directed graphs, and the graph distance on them.

A mesh is a set of traversable axis-aligned surfaces with directed
adjacency: an edge a->b means a player can move from a to b, which does
not imply the reverse (a ledge can be dropped off but not climbed).
Distances are shortest directed paths found with A*; unit weighting
counts edges, euclidean weighting sums 3D centroid-to-centroid lengths.

Unreachable pairs get ``math.inf``; the feature layer is responsible for
mapping that sentinel to a finite constant before model input.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import MeshError

BOMBSITE_TAGS = {"A": "bombsite_A", "B": "bombsite_B"}


@dataclass(frozen=True)
class NavArea:
    """One traversable surface: an axis-aligned footprint with corner heights."""

    area_id: int
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    # Corner heights in order [sw, se, nw, ne]:
    # sw=(min_x,min_y), se=(max_x,min_y), nw=(min_x,max_y), ne=(max_x,max_y)
    z_corners: tuple[float, float, float, float]
    tags: frozenset[str] = frozenset()
    centroid: tuple[float, float, float] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise MeshError(f"area {self.area_id}: degenerate footprint")
        if self.centroid is None:
            cx = (self.min_x + self.max_x) / 2.0
            cy = (self.min_y + self.max_y) / 2.0
            cz = sum(self.z_corners) / 4.0
            object.__setattr__(self, "centroid", (cx, cy, cz))

    def contains_xy(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def surface_z(self, x: float, y: float) -> float:
        """Bilinear interpolation of the corner heights at (x, y)."""
        sw, se, nw, ne = self.z_corners
        dx = self.max_x - self.min_x
        dy = self.max_y - self.min_y
        tx = 0.5 if dx == 0 else (x - self.min_x) / dx
        ty = 0.5 if dy == 0 else (y - self.min_y) / dy
        south = sw + (se - sw) * tx
        north = nw + (ne - nw) * tx
        return south + (north - south) * ty


@dataclass
class NavMesh:
    map_name: str
    areas: dict[int, NavArea]
    connections: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for a, b in self.connections:
            for end in (a, b):
                if end not in self.areas:
                    raise MeshError(f"connection ({a}, {b}) references missing area {end}")

    def site_areas(self, site: str) -> list[int]:
        tag = BOMBSITE_TAGS.get(site)
        if tag is None:
            raise MeshError(f"unknown bombsite {site!r}")
        return sorted(a.area_id for a in self.areas.values() if tag in a.tags)

    def locate_area(self, position) -> Optional[int]:
        """Area whose footprint contains (x, y), nearest in height to z.

        Returns ``None`` when no footprint contains the point. Ties on
        height break toward the lower area id for determinism.
        """
        x, y, z = position
        best_id = None
        best_dz = math.inf
        for area in self.areas.values():
            if not area.contains_xy(x, y):
                continue
            dz = abs(z - area.surface_z(x, y))
            if dz < best_dz or (dz == best_dz and (best_id is None or area.area_id < best_id)):
                best_dz = dz
                best_id = area.area_id
        return best_id

    # -- JSON interchange ---------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "NavMesh":
        try:
            areas = {}
            for raw in doc["areas"]:
                area_id = int(raw["area_id"])
                if area_id in areas:
                    raise MeshError(f"duplicate area id {area_id}")
                min_x, min_y, max_x, max_y = (float(v) for v in raw["footprint"])
                z_corners = tuple(float(v) for v in raw["z_corners"])
                if len(z_corners) != 4:
                    raise MeshError(f"area {area_id}: z_corners needs 4 values")
                centroid = raw.get("centroid")
                areas[area_id] = NavArea(
                    area_id=area_id,
                    min_x=min_x, min_y=min_y, max_x=max_x, max_y=max_y,
                    z_corners=z_corners,
                    tags=frozenset(raw.get("tags", ())),
                    centroid=tuple(float(v) for v in centroid) if centroid else None,
                )
            connections = tuple((int(a), int(b)) for a, b in doc["connections"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed mesh document: {exc}") from exc
        return cls(map_name=str(doc.get("map_name", "")), areas=areas,
                   connections=connections)

    def to_dict(self) -> dict:
        return {
            "map_name": self.map_name,
            "areas": [
                {
                    "area_id": a.area_id,
                    "footprint": [a.min_x, a.min_y, a.max_x, a.max_y],
                    "z_corners": list(a.z_corners),
                    "centroid": list(a.centroid),
                    "tags": sorted(a.tags),
                }
                for a in sorted(self.areas.values(), key=lambda a: a.area_id)
            ],
            "connections": [list(c) for c in self.connections],
        }


def load_mesh(path) -> NavMesh:
    with open(path, "rb") as fh:
        return NavMesh.from_dict(json.load(fh))


def save_mesh(mesh: NavMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


@dataclass
class NavGraph:
    """Directed adjacency over mesh areas with per-edge weights.

    Immutable after :func:`build_graph`; concurrent queries are safe.
    Bombsite distance tables (minimum distance from every node to any
    area tagged with the site) are precomputed at build time.
    """

    mesh: NavMesh
    weighting: str
    adjacency: dict[int, tuple[tuple[int, float], ...]]
    _site_tables: dict[str, dict[int, float]] = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values())

    def site_distances(self, site: str) -> dict[int, float]:
        """Distance from every area to the nearest area tagged with ``site``."""
        table = self._site_tables.get(site)
        if table is None:
            raise MeshError(f"no areas tagged for bombsite {site!r}")
        return table


def build_graph(mesh: NavMesh, weighting: str = "unit") -> NavGraph:
    """Build the directed graph for a mesh.

    ``unit`` weights every edge 1 so distances count graph hops;
    ``euclidean`` weights each edge by the 3D centroid-to-centroid length.
    """
    if weighting not in ("unit", "euclidean"):
        raise ValueError(f"unknown weighting {weighting!r}")

    adjacency: dict[int, list[tuple[int, float]]] = {a: [] for a in mesh.areas}
    for a, b in mesh.connections:
        if a not in mesh.areas or b not in mesh.areas:
            missing = a if a not in mesh.areas else b
            raise MeshError(f"connection ({a}, {b}) references missing area {missing}")
        if weighting == "unit":
            w = 1.0
        else:
            w = _centroid_distance(mesh.areas[a], mesh.areas[b])
        adjacency[a].append((b, w))

    frozen = {a: tuple(sorted(nbrs)) for a, nbrs in adjacency.items()}
    graph = NavGraph(mesh=mesh, weighting=weighting, adjacency=frozen)

    for site in ("A", "B"):
        tagged = [a for a in mesh.areas
                  if BOMBSITE_TAGS[site] in mesh.areas[a].tags]
        if tagged:
            graph._site_tables[site] = _multi_target_distances(graph, tagged)
    return graph


def _centroid_distance(a: NavArea, b: NavArea) -> float:
    ax, ay, az = a.centroid
    bx, by, bz = b.centroid
    return math.sqrt((ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2)


def graph_distance(graph: NavGraph, from_area: int, to_area: int
                   ) -> tuple[float, list[int]]:
    """Shortest directed path from one area to another via A*.

    Unit weighting uses a zero heuristic (uniform-cost search); euclidean
    weighting uses the straight-line 3D centroid distance, which never
    exceeds the remaining path cost. Returns ``(math.inf, [])`` when the
    target is unreachable.
    """
    for area in (from_area, to_area):
        if area not in graph.adjacency:
            raise MeshError(f"unknown area id {area}")

    if from_area == to_area:
        return 0.0, [from_area]

    euclidean = graph.weighting == "euclidean"
    areas = graph.mesh.areas
    target = areas[to_area]

    def heuristic(node: int) -> float:
        if not euclidean:
            return 0.0
        return _centroid_distance(areas[node], target)

    dist = {from_area: 0.0}
    parent: dict[int, int] = {}
    counter = 0  # breaks heap ties deterministically by insertion order
    frontier = [(heuristic(from_area), 0, from_area)]
    done = set()

    while frontier:
        _, _, node = heapq.heappop(frontier)
        if node in done:
            continue
        if node == to_area:
            path = [node]
            while path[-1] != from_area:
                path.append(parent[path[-1]])
            path.reverse()
            return dist[node], path
        done.add(node)
        d = dist[node]
        for nbr, w in graph.adjacency[node]:
            nd = d + w
            if nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                parent[nbr] = node
                counter += 1
                heapq.heappush(frontier, (nd + heuristic(nbr), counter, nbr))

    return math.inf, []


def distance_to_site(graph: NavGraph, mesh: NavMesh, from_area: int, site: str) -> float:
    """Minimum graph distance from an area to any area tagged with the site."""
    tagged = mesh.site_areas(site)
    if not tagged:
        raise MeshError(f"no areas tagged for bombsite {site!r}")
    return min(graph_distance(graph, from_area, t)[0] for t in tagged)


def locate_area(mesh: NavMesh, position) -> Optional[int]:
    return mesh.locate_area(position)


def _multi_target_distances(graph: NavGraph, targets: Iterable[int]) -> dict[int, float]:
    """Distance from every node TO the nearest target, via Dijkstra on the
    reversed graph (edges are directed, so forward and reverse differ)."""
    reverse: dict[int, list[tuple[int, float]]] = {a: [] for a in graph.adjacency}
    for a, nbrs in graph.adjacency.items():
        for b, w in nbrs:
            reverse[b].append((a, w))

    dist = {t: 0.0 for t in targets}
    frontier = [(0.0, t) for t in sorted(dist)]
    heapq.heapify(frontier)
    while frontier:
        d, node = heapq.heappop(frontier)
        if d > dist.get(node, math.inf):
            continue
        for nbr, w in reverse[node]:
            nd = d + w
            if nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                heapq.heappush(frontier, (nd, nbr))
    return dist
