"""Dynamic fleet partitioning.

Vehicles are grouped by a conditional Manhattan safety threshold: pairs closer
(in L1 distance) than what they could jointly traverse within one planning
horizon are coupled, connected components become independently solvable
subgraphs, and communication edges inside each component are limited by the
radio range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FleetSnapshot:
    """Positions, headings, target speeds, and radio ranges of the active fleet."""

    ids: tuple[int, ...]
    xy: np.ndarray  # (m, 2)
    heading: np.ndarray  # (m,)
    v_ref: np.ndarray  # (m,)
    r_tele: np.ndarray  # (m,)

    @staticmethod
    def from_lists(ids, xy, heading, v_ref, r_tele) -> "FleetSnapshot":
        snap = FleetSnapshot(
            ids=tuple(int(i) for i in ids),
            xy=np.asarray(xy, dtype=float).reshape(-1, 2),
            heading=np.asarray(heading, dtype=float),
            v_ref=np.asarray(v_ref, dtype=float),
            r_tele=np.asarray(r_tele, dtype=float),
        )
        if len(snap.ids) == 0:
            raise ValueError("snapshot needs at least one vehicle")
        if np.any(snap.r_tele <= 0):
            raise ValueError("radio ranges must be positive")
        return snap

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class Subgraph:
    """One connected component: members, radio edges, per-member neighbor lists."""

    members: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    neighbors: dict[int, tuple[int, ...]]
    radio_connected: bool

    def degree(self, member: int) -> int:
        return len(self.neighbors[member])

    def __len__(self) -> int:
        return len(self.members)


def wrap_heading_gap(a: float, b: float) -> float:
    """Absolute heading difference folded into [0, pi]."""
    d = abs(a - b) % (2.0 * math.pi)
    return d if d <= math.pi else 2.0 * math.pi - d


def safe_distance(v_ref_i: float, v_ref_j: float, dtheta: float, horizon: float) -> float:
    """Conditional Manhattan threshold below which a pair must be co-planned.

    Near-parallel headings (< pi/4 apart) give a pursuit bound from the faster
    speed; otherwise the crossing/encounter bound uses the speed sum.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if dtheta < math.pi / 4.0:
        return horizon * max(v_ref_i, v_ref_j)
    return horizon * (v_ref_i + v_ref_j)


def build_partition(snap: FleetSnapshot, horizon: float) -> list[Subgraph]:
    """Split the fleet into disjoint subgraphs for independent planning.

    Adjacency couples pairs with Manhattan distance strictly below their
    conditional safe distance; components come from BFS in ascending-id order;
    communication edges inside a component additionally require the Manhattan
    distance to stay within both members' radio ranges.
    """
    m = len(snap)
    d1 = np.abs(snap.xy[:, None, :] - snap.xy[None, :, :]).sum(axis=2)

    thresh = np.empty((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            gap = wrap_heading_gap(snap.heading[i], snap.heading[j])
            thresh[i, j] = thresh[j, i] = safe_distance(
                snap.v_ref[i], snap.v_ref[j], gap, horizon
            )
    coupled = d1 < thresh
    np.fill_diagonal(coupled, False)

    visited = [False] * m
    out: list[Subgraph] = []
    for seed in range(m):
        if visited[seed]:
            continue
        component = [seed]
        visited[seed] = True
        queue = [seed]
        while queue:
            node = queue.pop(0)
            for other in np.flatnonzero(coupled[node]):
                if not visited[other]:
                    visited[other] = True
                    component.append(int(other))
                    queue.append(int(other))
        component.sort()

        edges = []
        for a_pos, a in enumerate(component):
            for b in component[a_pos + 1 :]:
                if d1[a, b] <= min(snap.r_tele[a], snap.r_tele[b]):
                    edges.append((snap.ids[a], snap.ids[b]))
        members = tuple(snap.ids[k] for k in component)
        neighbor_sets: dict[int, list[int]] = {mid: [] for mid in members}
        for a, b in edges:
            neighbor_sets[a].append(b)
            neighbor_sets[b].append(a)
        neighbors = {mid: tuple(sorted(ns)) for mid, ns in neighbor_sets.items()}
        out.append(
            Subgraph(
                members=members,
                edges=tuple(edges),
                neighbors=neighbors,
                radio_connected=_edges_span(members, edges),
            )
        )
    return out


def _edges_span(members: tuple[int, ...], edges: list[tuple[int, int]]) -> bool:
    """True when the radio edge set connects every member of the component."""
    if len(members) <= 1:
        return True
    adj: dict[int, list[int]] = {mid: [] for mid in members}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {members[0]}
    queue = [members[0]]
    while queue:
        for nxt in adj[queue.pop(0)]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(members)
