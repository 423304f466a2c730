"""Slow, independent reference implementations used by the test suite.

Everything here favors transparency over speed: dense factorizations,
literal per-agent loops, exhaustive scans.  Nothing in this module is called
from the planning hot path.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import SingularKKT


# ---------------------------------------------------------------------------
# Dense equality-constrained QP
# ---------------------------------------------------------------------------


@dataclass
class DenseQP:
    """min 1/2 x'Hx + g'x  s.t.  Aeq x = beq."""

    H: np.ndarray
    g: np.ndarray
    Aeq: np.ndarray
    beq: np.ndarray


def kkt_solve(qp: DenseQP) -> np.ndarray:
    """Stationary point from one dense factorization of the KKT system.

    Raises:
        SingularKKT: the KKT matrix is singular (or numerically so).
    """
    n = len(qp.g)
    m = len(qp.beq)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = qp.H
    if m:
        kkt[:n, n:] = qp.Aeq.T
        kkt[n:, :n] = qp.Aeq
    rhs = np.concatenate([-qp.g, qp.beq])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKKT(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularKKT("KKT solution is not finite")
    return sol[:n]


# ---------------------------------------------------------------------------
# Literal per-agent box-constraint dual sweep
# ---------------------------------------------------------------------------


@dataclass
class NaiveBoxState:
    """Every agent's copy of every owner's box-constraint duals.

    Arrays are (n_agents, n_owners, rows): entry [v, i] is agent v's copy of
    the duals tied to owner i's box rows.
    """

    p: np.ndarray
    s: np.ndarray
    r: np.ndarray
    y: np.ndarray
    x: np.ndarray

    @staticmethod
    def zeros(n_agents: int, rows: int) -> "NaiveBoxState":
        mk = lambda: np.zeros((n_agents, n_agents, rows))
        return NaiveBoxState(p=mk(), s=mk(), r=mk(), y=mk(), x=mk())


def naive_box_dual_step(
    state: NaiveBoxState,
    box_values: np.ndarray,  # (n_agents, rows) current O dZ per owner
    neighbors: list[list[int]],
    gammas: list[float],
    sigma: float,
    rho: float,
    bounds_lower: np.ndarray,  # (n_agents, rows) per owner
    bounds_upper: np.ndarray,
) -> NaiveBoxState:
    """One synchronized sweep of the redundant per-agent box-dual updates.

    Transcribes the unsimplified update for every (agent v, owner i) pair;
    the constraint offset of box rows is identically zero and is omitted.
    Quadratic work by design.
    """
    n, _, rows = state.p.shape
    out = NaiveBoxState(
        p=state.p.copy(), s=state.s.copy(), r=state.r.copy(),
        y=state.y.copy(), x=state.x.copy(),
    )
    for v in range(n):
        for i in range(n):
            acc_diff = np.zeros(rows)
            acc_sum = np.zeros(rows)
            for j in neighbors[v]:
                acc_diff = acc_diff + (state.y[v, i] - state.y[j, i])
                acc_sum = acc_sum + (state.y[v, i] + state.y[j, i])
            out.p[v, i] = state.p[v, i] + rho * acc_diff
            out.s[v, i] = state.s[v, i] + sigma * (state.y[v, i] - state.x[v, i])
            out.r[v, i] = (
                sigma * state.x[v, i]
                + rho * acc_sum
                - (out.p[v, i] + out.s[v, i])
            )
            if v == i:
                out.y[v, i] = 2.0 * gammas[v] * (box_values[i] + out.r[v, i])
            else:
                out.y[v, i] = 2.0 * gammas[v] * out.r[v, i]
            a = out.s[v, i] / sigma + out.y[v, i]
            lam = np.maximum(bounds_lower[i], np.minimum(bounds_upper[i], a))
            out.x[v, i] = a - lam
    return out


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def central_difference_jacobian(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of fn: R^n -> R^m, one column per input."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((len(f0), len(x)))
    for k in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        jac[:, k] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2.0 * h)
    return jac


# ---------------------------------------------------------------------------
# Graph and scan references
# ---------------------------------------------------------------------------


def dijkstra_length(graph, start: int, goal: int) -> float:
    """Shortest-path length by plain Dijkstra; inf when unreachable."""
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        if node == goal:
            return d
        done.add(node)
        for nxt, length in graph.neighbors(node):
            nd = d + length
            if nd < dist.get(nxt, np.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return np.inf


def nearest_by_scan(points: np.ndarray, query) -> int:
    """Exhaustive nearest neighbor; ties resolve to the lowest ordinal."""
    d2 = ((np.asarray(points) - np.asarray(query)) ** 2).sum(axis=1)
    return int(np.argmin(d2))  # argmin returns the first minimum


class UnionFind:
    """Path-compressed disjoint sets over 0..n-1."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def groups(self) -> list[list[int]]:
        buckets: dict[int, list[int]] = {}
        for k in range(len(self.parent)):
            buckets.setdefault(self.find(k), []).append(k)
        return [sorted(v) for _, v in sorted(buckets.items())]
