"""Per-subgraph convexified problem assembly.

For a horizon of T steps the stacked decision vector of one agent is
``dZ = [dz_0 (4), du_0 (2), ..., du_{T-1} (2), dz_T (4)]`` of length 6T+4.
This module builds, around the exchanged nominal trajectories:

* the quadratic tracking cost (gradient ``L1`` and diagonal Hessian ``L2``),
* the linearized dynamics chain expressed as ``(L3 - L4) dZ = 0``,
* the stacked inter-vehicle coupling rows (two circle rows per pair per step,
  ordered step-major then pair then front/rear) with their Jacobians,
  constant offsets, and the clamped bounds of the projection step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DegeneratePair
from .partition import Subgraph
from .vehicle import (
    ControlInput,
    VehicleGeometry,
    VehicleLimits,
    VehicleState,
    linearize_dynamics,
)


@dataclass(frozen=True)
class SolverConfig:
    """Penalty weights, horizons, and limits of the consensus solver."""

    sigma: float = 0.05
    rho: float = 0.002
    epsilon: float = 0.1
    horizon: int = 15  # planning steps per solve
    exec_horizon: int = 10  # executed steps per epoch
    dt: float = 0.1
    k_max: int = 100  # inner consensus iterations
    outer_max: int = 5  # linearization refreshes per solve
    outer_tol: float = 1e-3
    q_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    r_weights: tuple[float, float] = (0.1, 0.1)
    d_safe: float = 1.25
    row_screen: float = 2.5
    limits: VehicleLimits = field(default_factory=VehicleLimits)

    def __post_init__(self):
        if self.sigma <= 0.0 or self.rho <= 0.0:
            raise ValueError("sigma and rho must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not (1 <= self.exec_horizon <= self.horizon):
            raise ValueError("need 1 <= exec_horizon <= horizon")
        if self.k_max < 1 or self.outer_max < 1:
            raise ValueError("k_max and outer_max must be >= 1")

    def gamma(self, degree: int) -> float:
        """Per-agent step size 1 / (2 (sigma + 2 rho deg))."""
        return 1.0 / (2.0 * (self.sigma + 2.0 * self.rho * degree))

    @property
    def partition_horizon(self) -> float:
        """Planning horizon as a duration, used by the safe-distance rule."""
        return self.horizon * self.dt


def wrap_to_pi(angle):
    """Fold angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


def n_decision(T: int) -> int:
    return 6 * T + 4


def z_slice(tau: int) -> slice:
    return slice(6 * tau, 6 * tau + 4)


def u_slice(tau: int) -> slice:
    return slice(6 * tau + 4, 6 * tau + 6)


def split_decision(dz: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Unstack a (6T+4,) decision vector into (T+1, 4) states and (T, 2) inputs."""
    states = np.empty((T + 1, 4))
    inputs = np.empty((T, 2))
    for tau in range(T):
        states[tau] = dz[z_slice(tau)]
        inputs[tau] = dz[u_slice(tau)]
    states[T] = dz[z_slice(T)]
    return states, inputs


# ---------------------------------------------------------------------------
# Cost and dynamics blocks
# ---------------------------------------------------------------------------


def assemble_cost(
    refs: np.ndarray, z_nom: np.ndarray, u_nom: np.ndarray, cfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient L1 and Hessian diagonal L2 of the tracking cost at the nominal.

    The cost is sum ||z - z_ref||^2_Q + sum ||u||^2_R; derivatives keep the
    factor 2 of the quadratic form.  Heading errors are folded into
    (-pi, pi] before weighting so wrap-around never produces phantom cost.
    """
    T = len(u_nom)
    if len(z_nom) != T + 1 or len(refs) != T + 1:
        raise ValueError("nominal states/references must span horizon+1 knots")
    q = 2.0 * np.asarray(cfg.q_weights, dtype=float)
    r = 2.0 * np.asarray(cfg.r_weights, dtype=float)
    l1 = np.empty(n_decision(T))
    l2 = np.empty(n_decision(T))
    for tau in range(T + 1):
        err = z_nom[tau] - refs[tau]
        err[2] = wrap_to_pi(err[2])
        l1[z_slice(tau)] = q * err
        l2[z_slice(tau)] = q
        if tau < T:
            l1[u_slice(tau)] = r * u_nom[tau]
            l2[u_slice(tau)] = r
    return l1, l2


def assemble_dynamics(
    z_nom: np.ndarray, u_nom: np.ndarray, cfg: SolverConfig, geom: VehicleGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Stage Jacobians (A, B) of the vehicle model along the nominal."""
    T = len(u_nom)
    A = np.empty((T, 4, 4))
    B = np.empty((T, 4, 2))
    for tau in range(T):
        lin = linearize_dynamics(
            VehicleState.from_array(z_nom[tau]),
            ControlInput.from_array(u_nom[tau]),
            cfg.dt,
            geom,
        )
        A[tau] = lin.A
        B[tau] = lin.B
    return A, B


def l3_l4_dense(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense (4T, 6T+4) dynamics-chain matrices with (L3 - L4) dZ = 0."""
    T = len(A)
    nd = n_decision(T)
    L3 = np.zeros((4 * T, nd))
    L4 = np.zeros((4 * T, nd))
    for tau in range(T):
        rows = slice(4 * tau, 4 * tau + 4)
        L3[rows, z_slice(tau)] = A[tau]
        L3[rows, u_slice(tau)] = B[tau]
        L4[rows, z_slice(tau + 1)] = np.eye(4)
    return L3, L4


# ---------------------------------------------------------------------------
# Box-constrained variable selection
# ---------------------------------------------------------------------------


def n_box_rows(T: int) -> int:
    return 3 * T + 1


def box_selector_dense(T: int) -> np.ndarray:
    """(3T+1, 6T+4) boolean selector picking (v, delta, a) per step plus v_T."""
    sel = np.zeros((n_box_rows(T), n_decision(T)))
    for tau in range(T):
        sel[3 * tau, 6 * tau + 3] = 1.0  # v_tau
        sel[3 * tau + 1, 6 * tau + 5] = 1.0  # delta_tau
        sel[3 * tau + 2, 6 * tau + 4] = 1.0  # a_tau
    sel[3 * T, 6 * T + 3] = 1.0  # terminal v
    return sel


def box_values(z_nom: np.ndarray, u_nom: np.ndarray) -> np.ndarray:
    """Stacked (v, delta, a) nominal values per step plus the terminal v."""
    T = len(u_nom)
    e = np.empty(n_box_rows(T))
    e[0 : 3 * T : 3] = z_nom[:T, 3]
    e[1 : 3 * T : 3] = u_nom[:, 1]
    e[2 : 3 * T : 3] = u_nom[:, 0]
    e[3 * T] = z_nom[T, 3]
    return e


def box_limits(T: int, limits: VehicleLimits) -> tuple[np.ndarray, np.ndarray]:
    """Absolute lower/upper bounds aligned with the box-row layout."""
    lo = np.empty(n_box_rows(T))
    hi = np.empty(n_box_rows(T))
    lo[0 : 3 * T : 3], hi[0 : 3 * T : 3] = limits.v_min, limits.v_max
    lo[1 : 3 * T : 3], hi[1 : 3 * T : 3] = -limits.delta_max, limits.delta_max
    lo[2 : 3 * T : 3], hi[2 : 3 * T : 3] = limits.a_min, limits.a_max
    lo[3 * T], hi[3 * T] = limits.v_min, limits.v_max
    return lo, hi


@dataclass(frozen=True)
class BoundsVec:
    """Elementwise clamp region of the projection step, tightened by epsilon."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise ValueError("bounds vector has lower > upper entries")


def box_bounds(
    z_nom: np.ndarray, u_nom: np.ndarray, cfg: SolverConfig
) -> BoundsVec:
    """Relative box bounds around the nominal, shifted inward by epsilon."""
    e_nom = box_values(z_nom, u_nom)
    lo, hi = box_limits(len(u_nom), cfg.limits)
    return BoundsVec(lower=lo - e_nom + cfg.epsilon, upper=hi - e_nom - cfg.epsilon)


# ---------------------------------------------------------------------------
# Coupling rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingLayout:
    """Row bookkeeping of the stacked pair constraints.

    Rows are ordered step-major: for step tau, all pairs (a, b) with a < b in
    lexicographic order contribute two adjacent rows (front circle, rear
    circle).  The ellipse is always on the lower-indexed member of a pair and
    the circles on the higher-indexed one.
    """

    n_agents: int
    T: int
    pairs: tuple[tuple[int, int], ...]

    @property
    def rows_per_step(self) -> int:
        return 2 * len(self.pairs)

    @property
    def n_rows(self) -> int:
        return self.rows_per_step * (self.T + 1)

    def row(self, tau: int, pair_idx: int, circle: int) -> int:
        return tau * self.rows_per_step + 2 * pair_idx + circle

    def pairs_of(self, agent: int) -> list[int]:
        return [k for k, (a, b) in enumerate(self.pairs) if agent in (a, b)]


def all_pairs(n_agents: int) -> tuple[tuple[int, int], ...]:
    return tuple((a, b) for a in range(n_agents) for b in range(a + 1, n_agents))


@dataclass
class CouplingBlock:
    """Assembled pair-constraint data shared by the dual solvers.

    ``jac[i]`` has shape (n_own_i, T+1, 2, 4): the Jacobian of each own row
    w.r.t. agent i's state at that step.  ``own_rows[i]`` maps the same
    (pair, step, circle) cells to global row indices, flattened step-major to
    match the row layout.
    """

    layout: CouplingLayout
    khat: np.ndarray  # (n_rows,) normalized pair distances at the nominal
    offset: np.ndarray  # (n_rows,) constraint offset d_safe - khat
    jac: list[np.ndarray]
    own_rows: list[np.ndarray]
    carrier_mask: np.ndarray  # (n_agents, n_pairs) agents tracking each pair
    carrier_count: np.ndarray  # (n_pairs,)

    def jhat_dense(self, agent: int) -> np.ndarray:
        """Dense (n_rows, 6T+4) stacked Jacobian of one agent (test/debug path)."""
        lay = self.layout
        out = np.zeros((lay.n_rows, n_decision(lay.T)))
        for slot, pair_idx in enumerate(lay.pairs_of(agent)):
            for tau in range(lay.T + 1):
                for c in (0, 1):
                    out[lay.row(tau, pair_idx, c), z_slice(tau)] = self.jac[agent][slot, tau, c]
        return out


def assemble_coupling(
    subgraph: Subgraph,
    states_nom: np.ndarray,
    geoms: list[VehicleGeometry],
    cfg: SolverConfig,
    pairs: tuple[tuple[int, int], ...] | None = None,
) -> CouplingBlock:
    """Build pair-constraint rows for one subgraph at the nominal states.

    Args:
        subgraph: membership and communication topology; local agent k is
            ``subgraph.members[k]``.
        states_nom: (N, T+1, 4) nominal state knots of every member.
        geoms: per-member footprints.
        cfg: solver configuration (d_safe, horizons).
        pairs: explicit local pair list; defaults to the communication edges.
            Pass :func:`all_pairs` output for the dense baseline layout.

    Raises:
        DegeneratePair: when any pair's centers coincide at some step.
    """
    members = subgraph.members
    n = len(members)
    local = {mid: k for k, mid in enumerate(members)}
    if pairs is None:
        pairs = tuple(
            sorted({(min(local[a], local[b]), max(local[a], local[b])) for a, b in subgraph.edges})
        )
    T = states_nom.shape[1] - 1

    layout = CouplingLayout(n_agents=n, T=T, pairs=pairs)
    khat = np.empty(layout.n_rows)
    jac = [np.zeros((len(layout.pairs_of(i)), T + 1, 2, 4)) for i in range(n)]
    own_rows = [
        np.array(
            [
                layout.row(tau, pair_idx, c)
                for tau in range(T + 1)
                for pair_idx in layout.pairs_of(i)
                for c in (0, 1)
            ],
            dtype=int,
        )
        for i in range(n)
    ]
    slot_of = [{p: s for s, p in enumerate(layout.pairs_of(i))} for i in range(n)]

    edge_set = {
        (min(local[a], local[b]), max(local[a], local[b])) for a, b in subgraph.edges
    }
    for pair_idx, (a, b) in enumerate(pairs):
        # ellipse on the lower local index, double circle on the higher;
        # pairs outside communication range keep identically-zero Jacobians
        is_edge = (a, b) in edge_set
        for tau in range(T + 1):
            z_e = VehicleState.from_array(states_nom[a, tau])
            z_c = VehicleState.from_array(states_nom[b, tau])
            for c, which in enumerate((geometry.FRONT, geometry.REAR)):
                center = z_c.position + geometry.circle_distance(geoms[b], which) * np.array(
                    [math.cos(z_c.theta), math.sin(z_c.theta)]
                )
                tf = geometry.pair_transform(center, z_e, geoms[b], geoms[a])
                khat[layout.row(tau, pair_idx, c)] = tf.norm
                if not is_edge:
                    continue
                if tf.norm <= geometry.DEGENERATE_TOL:
                    raise DegeneratePair(
                        f"pair ({members[a]},{members[b]}) degenerate at step {tau}"
                    )
                if tf.norm > cfg.row_screen:
                    # provably inactive at this linearization; keeping the
                    # Jacobian would only inject separation-scaled curvature
                    continue
                rows = geometry.collision_jacobians(z_c, z_e, which, geoms[b], geoms[a])
                jac[a][slot_of[a][pair_idx], tau, c] = rows.J_ellipse
                jac[b][slot_of[b][pair_idx], tau, c] = rows.J_circle

    neighbor_local = {
        local[mid]: frozenset(local[x] for x in subgraph.neighbors[mid]) for mid in members
    }
    carrier_mask = np.zeros((n, len(pairs)), dtype=bool)
    for i in range(n):
        ball = neighbor_local[i] | {i}
        for pair_idx, (a, b) in enumerate(pairs):
            carrier_mask[i, pair_idx] = (a in ball) or (b in ball)
    carrier_count = carrier_mask.sum(axis=0)

    return CouplingBlock(
        layout=layout,
        khat=khat,
        offset=cfg.d_safe - khat,
        jac=jac,
        own_rows=own_rows,
        carrier_mask=carrier_mask,
        carrier_count=carrier_count,
    )


# ---------------------------------------------------------------------------
# Whole-subgraph assembly
# ---------------------------------------------------------------------------


@dataclass
class AssembledOCP:
    """All convexified blocks of one subgraph at one linearization point."""

    cfg: SolverConfig
    subgraph: Subgraph
    T: int
    l1: np.ndarray  # (N, 6T+4)
    l2_diag: np.ndarray  # (N, 6T+4)
    A: np.ndarray  # (N, T, 4, 4)
    B: np.ndarray  # (N, T, 4, 2)
    coupling: CouplingBlock
    box: list[BoundsVec]

    def __post_init__(self):
        n = len(self.subgraph.members)
        nd = n_decision(self.T)
        assert self.l1.shape == (n, nd) and self.l2_diag.shape == (n, nd)
        assert self.A.shape == (n, self.T, 4, 4) and self.B.shape == (n, self.T, 4, 2)
        assert all(len(b.lower) == n_box_rows(self.T) for b in self.box)

    @property
    def n_agents(self) -> int:
        return len(self.subgraph.members)

    def total_coupling_rows(self) -> int:
        """Stacked constraint-space dimension: pair rows plus all box rows."""
        return self.coupling.layout.n_rows + n_box_rows(self.T) * self.n_agents


def assemble_subgraph(
    subgraph: Subgraph,
    refs: np.ndarray,
    z_nom: np.ndarray,
    u_nom: np.ndarray,
    geoms: list[VehicleGeometry],
    cfg: SolverConfig,
    pairs: tuple[tuple[int, int], ...] | None = None,
) -> AssembledOCP:
    """Assemble every block of one subgraph's convexified problem."""
    n = len(subgraph.members)
    T = u_nom.shape[1]
    l1 = np.empty((n, n_decision(T)))
    l2 = np.empty((n, n_decision(T)))
    A = np.empty((n, T, 4, 4))
    B = np.empty((n, T, 4, 2))
    box = []
    for i in range(n):
        l1[i], l2[i] = assemble_cost(refs[i], z_nom[i], u_nom[i], cfg)
        A[i], B[i] = assemble_dynamics(z_nom[i], u_nom[i], cfg, geoms[i])
        box.append(box_bounds(z_nom[i], u_nom[i], cfg))
    coupling = assemble_coupling(subgraph, z_nom, geoms, cfg, pairs=pairs)
    return AssembledOCP(
        cfg=cfg,
        subgraph=subgraph,
        T=T,
        l1=l1,
        l2_diag=l2,
        A=A,
        B=B,
        coupling=coupling,
        box=box,
    )


def dump_assembly(ocp: AssembledOCP, path) -> None:
    """Write the assembled blocks to a JSON debug file for oracle cross-checks."""
    lay = ocp.coupling.layout
    data = {
        "members": list(ocp.subgraph.members),
        "T": ocp.T,
        "pairs": [list(p) for p in lay.pairs],
        "l1": ocp.l1.tolist(),
        "l2_diag": ocp.l2_diag.tolist(),
        "khat": ocp.coupling.khat.tolist(),
        "offset": ocp.coupling.offset.tolist(),
        "jhat": [ocp.coupling.jhat_dense(i).tolist() for i in range(ocp.n_agents)],
        "box_lower": [b.lower.tolist() for b in ocp.box],
        "box_upper": [b.upper.tolist() for b in ocp.box],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)
