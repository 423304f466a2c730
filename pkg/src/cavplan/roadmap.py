"""Road network, global route search, smoothing, and runtime waypoint lookup.

A road graph is a directed graph of densely sampled lane-centerline points;
routes come from A* with a Euclidean heuristic, are smoothed with a
Savitzky-Golay filter, and are tracked at runtime through a nearest-waypoint
spatial index plus constant-speed arc-length advancement.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .errors import BadFilterParams, NoRoute


# ---------------------------------------------------------------------------
# Road graph
# ---------------------------------------------------------------------------


@dataclass
class RoadGraph:
    """Directed waypoint graph with Euclidean edge lengths."""

    ids: list[int]
    xy: np.ndarray  # (n, 2), row k holds the position of ids[k]
    edges: list[tuple[int, int, float]]
    _index: dict[int, int] = field(default_factory=dict, repr=False)
    _adj: dict[int, list[tuple[int, float]]] = field(default_factory=dict, repr=False)

    @staticmethod
    def from_lists(nodes, edges) -> "RoadGraph":
        """Build from ``[[id, x, y], ...]`` and ``[[from, to], ...]`` (optional third
        element: length, validated against the Euclidean distance)."""
        ids = [int(n[0]) for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids in road graph")
        xy = np.array([[float(n[1]), float(n[2])] for n in nodes])
        index = {i: k for k, i in enumerate(ids)}
        out_edges: list[tuple[int, int, float]] = []
        for e in edges:
            a, b = int(e[0]), int(e[1])
            length = float(np.linalg.norm(xy[index[a]] - xy[index[b]]))
            if len(e) > 2 and abs(float(e[2]) - length) > 1e-6:
                raise ValueError(f"edge ({a},{b}) length {e[2]} != Euclidean {length}")
            out_edges.append((a, b, length))
        g = RoadGraph(ids=ids, xy=xy, edges=out_edges, _index=index)
        g._adj = {i: [] for i in ids}
        for a, b, length in out_edges:
            g._adj[a].append((b, length))
        return g

    def position(self, node_id: int) -> np.ndarray:
        return self.xy[self._index[node_id]]

    def neighbors(self, node_id: int) -> list[tuple[int, float]]:
        return self._adj[node_id]

    def nodes_within_ring(self, center, r_min: float, r_max: float) -> list[int]:
        """Ids whose Euclidean distance from ``center`` lies in [r_min, r_max]."""
        d = np.linalg.norm(self.xy - np.asarray(center, dtype=float), axis=1)
        keep = (d >= r_min) & (d <= r_max)
        return [i for i, ok in zip(self.ids, keep) if ok]


def astar_route(graph: RoadGraph, start: int, goal: int) -> list[int]:
    """Minimum-length node path under edge lengths (admissible Euclidean heuristic).

    Raises:
        NoRoute: when the goal is unreachable from the start.
    """
    if start == goal:
        return [start]
    goal_pos = graph.position(goal)

    def h(node: int) -> float:
        p = graph.position(node)
        return math.hypot(p[0] - goal_pos[0], p[1] - goal_pos[1])

    counter = 0
    frontier: list[tuple[float, int, int, float]] = [(h(start), counter, start, 0.0)]
    came_from: dict[int, int] = {}
    best_cost = {start: 0.0}
    while frontier:
        _, _, node, cost = heapq.heappop(frontier)
        if node == goal:
            path = [node]
            while node != start:
                node = came_from[node]
                path.append(node)
            path.reverse()
            return path
        if cost > best_cost.get(node, math.inf):
            continue
        for nxt, length in graph.neighbors(node):
            new_cost = cost + length
            if new_cost < best_cost.get(nxt, math.inf):
                best_cost[nxt] = new_cost
                came_from[nxt] = node
                counter += 1
                heapq.heappush(frontier, (new_cost + h(nxt), counter, nxt, new_cost))
    raise NoRoute(f"no route from {start} to {goal}")


# ---------------------------------------------------------------------------
# Guidance trajectories
# ---------------------------------------------------------------------------


def _headings_from_positions(xy: np.ndarray) -> np.ndarray:
    """Per-waypoint heading from forward differences; the last point repeats."""
    n = len(xy)
    phi = np.zeros(n)
    if n >= 2:
        d = np.diff(xy, axis=0)
        phi[:-1] = np.arctan2(d[:, 1], d[:, 0])
        phi[-1] = phi[-2]
    return phi


@dataclass
class GuidanceTrajectory:
    """Ordered waypoints (x, y, phi) with a single target speed."""

    xy: np.ndarray  # (n, 2)
    phi: np.ndarray  # (n,)
    v_ref: float

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if len(self.xy) == 0:
            raise ValueError("trajectory needs at least one waypoint")
        if len(self.xy) != len(self.phi):
            raise ValueError("xy and phi lengths differ")
        if len(self.xy) > 1 and (np.diff(self.xy, axis=0) == 0).all(axis=1).any():
            raise ValueError("consecutive waypoints must be distinct")

    def __len__(self) -> int:
        return len(self.xy)

    @staticmethod
    def from_route(graph: RoadGraph, route: list[int], v_ref: float) -> "GuidanceTrajectory":
        xy = np.array([graph.position(n) for n in route])
        return GuidanceTrajectory(xy=xy, phi=_headings_from_positions(xy), v_ref=v_ref)

    def arc_lengths(self) -> np.ndarray:
        if len(self.xy) == 1:
            return np.zeros(1)
        seg = np.linalg.norm(np.diff(self.xy, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])


def smooth_path(traj: GuidanceTrajectory, window: int = 9, order: int = 3) -> GuidanceTrajectory:
    """Savitzky-Golay smoothing of x and y independently; phi is recomputed.

    Endpoint windows are handled by polynomial extrapolation of the edge fits,
    so polynomial inputs of degree <= order pass through unchanged.

    Raises:
        BadFilterParams: window even, order >= window, or too few waypoints.
    """
    if window % 2 == 0 or window < 3:
        raise BadFilterParams(f"window must be odd and >= 3, got {window}")
    if order >= window:
        raise BadFilterParams(f"order {order} must be < window {window}")
    if len(traj) < window:
        raise BadFilterParams(f"need at least {window} waypoints, got {len(traj)}")
    sx = savgol_filter(traj.xy[:, 0], window, order, mode="interp")
    sy = savgol_filter(traj.xy[:, 1], window, order, mode="interp")
    xy = np.column_stack([sx, sy])
    # drop exact duplicates the filter may create on degenerate inputs
    keep = np.ones(len(xy), dtype=bool)
    keep[1:] = (np.diff(xy, axis=0) != 0).any(axis=1)
    xy = xy[keep]
    return GuidanceTrajectory(xy=xy, phi=_headings_from_positions(xy), v_ref=traj.v_ref)


def export_trajectory_csv(traj: GuidanceTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "x", "y", "phi"])
        for k in range(len(traj)):
            writer.writerow([k, repr(traj.xy[k, 0]), repr(traj.xy[k, 1]), repr(traj.phi[k])])


# ---------------------------------------------------------------------------
# Nearest-waypoint index
# ---------------------------------------------------------------------------


class WaypointIndex:
    """Balanced 2-d tree over waypoint positions.

    Queries return the ordinal of the closest waypoint; exact distance ties
    resolve to the lowest ordinal.
    """

    __slots__ = ("_pts", "_nodes")

    def __init__(self, points):
        self._pts = np.asarray(points, dtype=float)
        if self._pts.ndim != 2 or self._pts.shape[1] != 2 or len(self._pts) == 0:
            raise ValueError("points must be a non-empty (n, 2) array")
        # each node: (point ordinal, axis, left child, right child); -1 = leaf gap
        self._nodes: list[tuple[int, int, int, int]] = []
        self._build(np.arange(len(self._pts)), 0)

    def _build(self, ordinals: np.ndarray, depth: int) -> int:
        if len(ordinals) == 0:
            return -1
        axis = depth % 2
        # sort by (coordinate, ordinal) so construction is deterministic
        order = np.lexsort((ordinals, self._pts[ordinals, axis]))
        ordinals = ordinals[order]
        mid = len(ordinals) // 2
        slot = len(self._nodes)
        self._nodes.append((int(ordinals[mid]), axis, -1, -1))
        left = self._build(ordinals[:mid], depth + 1)
        right = self._build(ordinals[mid + 1 :], depth + 1)
        ordinal, axis, _, _ = self._nodes[slot]
        self._nodes[slot] = (ordinal, axis, left, right)
        return slot

    def __len__(self) -> int:
        return len(self._pts)

    def query(self, point) -> int:
        """Ordinal of the nearest waypoint to ``point``."""
        px, py = float(point[0]), float(point[1])
        best_d2 = math.inf
        best_ord = -1
        stack = [0]
        while stack:
            slot = stack.pop()
            if slot < 0:
                continue
            ordinal, axis, left, right = self._nodes[slot]
            dx = px - self._pts[ordinal, 0]
            dy = py - self._pts[ordinal, 1]
            d2 = dx * dx + dy * dy
            if d2 < best_d2 or (d2 == best_d2 and ordinal < best_ord):
                best_d2, best_ord = d2, ordinal
            delta = (px - self._pts[ordinal, 0]) if axis == 0 else (py - self._pts[ordinal, 1])
            near, far = (left, right) if delta < 0 else (right, left)
            # the far side can still hold an equidistant lower ordinal: prune with <=
            if delta * delta <= best_d2:
                stack.append(far)
            stack.append(near)
        return best_ord


def nearest_waypoint(index: WaypointIndex, point) -> int:
    return index.query(point)


# ---------------------------------------------------------------------------
# Reference windows
# ---------------------------------------------------------------------------


def reference_window(
    traj: GuidanceTrajectory,
    index: WaypointIndex,
    position,
    horizon: int,
    dt: float,
) -> np.ndarray:
    """(horizon+1, 4) reference states [x, y, phi, v_ref] ahead of ``position``.

    Starts at the waypoint nearest to the query position and advances a fixed
    arc length v_ref*dt per step along the polyline, holding the final
    waypoint once the path is exhausted.
    """
    start = index.query(position)
    arc = traj.arc_lengths()
    total = arc[-1]
    refs = np.empty((horizon + 1, 4))
    refs[:, 3] = traj.v_ref
    seg_idx = start
    for k in range(horizon + 1):
        s = arc[start] + k * traj.v_ref * dt
        if s >= total or len(traj) == 1:
            refs[k, 0:2] = traj.xy[-1]
            refs[k, 2] = traj.phi[-1]
            continue
        while arc[seg_idx + 1] <= s:
            seg_idx += 1
        seg_len = arc[seg_idx + 1] - arc[seg_idx]
        frac = (s - arc[seg_idx]) / seg_len
        refs[k, 0:2] = traj.xy[seg_idx] + frac * (traj.xy[seg_idx + 1] - traj.xy[seg_idx])
        refs[k, 2] = traj.phi[seg_idx]
    return refs


# ---------------------------------------------------------------------------
# Map files and synthetic grids
# ---------------------------------------------------------------------------


def make_grid_map(
    half_extent: float, spacing: float, step: float = 1.0, lane_offset: float = 2.0
) -> RoadGraph:
    """Synthetic urban grid of dual-carriageway roads every ``spacing`` meters.

    Each road carries two directed lane centerlines offset ``lane_offset``
    meters to the right of travel, sampled every ``step`` meters.  With the
    default integer-aligned offsets, crossing lanes share sample nodes, which
    makes every intersection turn available to the route search while keeping
    opposing traffic laterally separated.
    """
    n_lines = int(half_extent // spacing)
    coords = [k * spacing for k in range(-n_lines, n_lines + 1)]
    span = half_extent + lane_offset  # outer offset lanes must still meet crossings
    samples = np.arange(-span, span + step / 2, step)
    key_of: dict[tuple[int, int], int] = {}
    nodes: list[list[float]] = []
    edges: list[list[int]] = []

    def node_id(x: float, y: float) -> int:
        key = (round(x * 1e6), round(y * 1e6))
        if key not in key_of:
            key_of[key] = len(nodes)
            nodes.append([len(nodes), x, y])
        return key_of[key]

    def add_lane(points) -> None:
        prev = None
        for x, y in points:
            cur = node_id(float(x), float(y))
            if prev is not None and prev != cur:
                edges.append([prev, cur])
            prev = cur

    for c in coords:
        add_lane((x, c - lane_offset) for x in samples)  # eastbound
        add_lane((x, c + lane_offset) for x in samples[::-1])  # westbound
        add_lane((c + lane_offset, y) for y in samples)  # northbound
        add_lane((c - lane_offset, y) for y in samples[::-1])  # southbound
    return RoadGraph.from_lists(nodes, edges)


def load_road_graph(path) -> RoadGraph:
    """Load a road graph from JSON.

    Two layouts are accepted: explicit ``{"nodes": [[id,x,y],...],
    "edges": [[from,to],...]}`` and the compact generator form
    ``{"grid": {"half_extent": ..., "spacing": ..., "step": ...}}``.
    """
    with open(path) as fh:
        data = json.load(fh)
    if "grid" in data:
        g = data["grid"]
        return make_grid_map(
            half_extent=float(g["half_extent"]),
            spacing=float(g["spacing"]),
            step=float(g.get("step", 1.0)),
        )
    return RoadGraph.from_lists(data["nodes"], data["edges"])


def save_road_graph(graph: RoadGraph, path) -> None:
    data = {
        "nodes": [[i, float(graph.position(i)[0]), float(graph.position(i)[1])] for i in graph.ids],
        "edges": [[a, b] for a, b, _ in graph.edges],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)
