"""Consensus dual solvers for one subgraph.

Two variants share the assembly, the Riccati primal step, and the projection:

* :func:`admm_solve_subgraph` - the production path.  Each agent keeps its
  pair-constraint duals only for rows whose pair touches itself or a direct
  neighbor, and the redundant per-agent copies of other agents' box-constraint
  duals collapse into one shared copy per owner (all non-owner copies provably
  stay equal under identical initialization).  At bounded communication degree
  the dual-update work per sweep grows linearly with the subgraph size.
* :func:`admm_solve_naive` - the unsimplified baseline: every agent carries
  the full stacked dual vector over all pairs and all owners' box rows, with
  literal neighbor sums.  Quadratic width by construction; on fully connected
  subgraphs it matches the production path iterate for iterate, which the test
  suite exploits as an oracle.

Per sweep and agent the dual updates are, with step sizes sigma and rho and
gamma = 1/(2 (sigma + 2 rho deg)):

    p += rho * sum_j (y_i - y_j)
    s += sigma * (y_i - x_i)
    r  = sigma * x_i + rho * sum_j (y_i + y_j) - (k_share + p + s)
    dZ = argmin F(dZ) + gamma * ||J dZ + r||^2   s.t. linearized dynamics
    y  = 2 gamma * (J dZ + r)
    x  = (s / sigma + y) - clamp(s / sigma + y, lower, upper)

The quadratic part of every agent's stage cost is fixed within one outer
iteration, so the Riccati gain sweep is factored once per outer iteration
(batched over agents) and each inner sweep only reruns the linear recursion.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .assembly import (
    AssembledOCP,
    SolverConfig,
    all_pairs,
    assemble_subgraph,
    n_box_rows,
    n_decision,
    u_slice,
    z_slice,
)
from .errors import InfeasibleStart, NumericalError
from .partition import Subgraph
from .vehicle import VehicleGeometry, VehicleState, rollout


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def project_box_cone(v: np.ndarray, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    """Split v into its clamp onto [lower, upper] and the residual.

    Returns ``(x_out, lam)`` with ``lam = clamp(v, lower, upper)`` and
    ``x_out = v - lam``; their sum reproduces v exactly (Moreau split of the
    projection onto the constraint region).
    """
    v = np.asarray(v, dtype=float)
    lam = np.minimum(np.asarray(upper, dtype=float), v)
    lam = np.maximum(np.asarray(lower, dtype=float), lam)
    return v - lam, lam


# ---------------------------------------------------------------------------
# Riccati primal step
# ---------------------------------------------------------------------------


@dataclass
class LqrSubproblem:
    """Stage-separable quadratic over a dynamics chain, dz_0 pinned to zero."""

    A: np.ndarray  # (T, 4, 4)
    B: np.ndarray  # (T, 4, 2)
    Hz: np.ndarray  # (T+1, 4, 4)
    Hu: np.ndarray  # (T, 2, 2)
    gz: np.ndarray  # (T+1, 4)
    gu: np.ndarray  # (T, 2)

    @property
    def T(self) -> int:
        return len(self.A)


class BatchRiccati:
    """Gain sweep for a batch of agents sharing one horizon.

    The backward pass over the quadratic terms runs once at construction;
    :meth:`solve` reruns only the linear backward recursion and the forward
    rollout for fresh gradients.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, Hz: np.ndarray, Hu: np.ndarray, mu: float = 0.0):
        n, T = A.shape[0], A.shape[1]
        self.A, self.B, self.T, self.n = A, B, T, n
        eye_z = mu * np.eye(4)
        eye_u = mu * np.eye(2)
        self.K = np.empty((n, T, 2, 4))
        self.Qzu = np.empty((n, T, 4, 2))
        self.Quu = np.empty((n, T, 2, 2))
        P = Hz[:, T] + eye_z
        for tau in range(T - 1, -1, -1):
            At = A[:, tau].transpose(0, 2, 1)
            Bt = B[:, tau].transpose(0, 2, 1)
            PA = P @ A[:, tau]
            PB = P @ B[:, tau]
            Quu = Hu[:, tau] + eye_u + Bt @ PB
            np.linalg.cholesky(Quu)  # PD check; raises LinAlgError
            Qzu = At @ PB
            self.Quu[:, tau] = Quu
            self.Qzu[:, tau] = Qzu
            self.K[:, tau] = -np.linalg.solve(Quu, Qzu.transpose(0, 2, 1))
            P = Hz[:, tau] + eye_z + At @ PA + Qzu @ self.K[:, tau]
            P = 0.5 * (P + P.transpose(0, 2, 1))

    def solve(self, gz: np.ndarray, gu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """States (n, T+1, 4) and inputs (n, T, 2) minimizing the batch quadratics."""
        n, T = self.n, self.T
        p = gz[:, T].copy()
        kff = np.empty((n, T, 2))
        for tau in range(T - 1, -1, -1):
            At = self.A[:, tau].transpose(0, 2, 1)
            Bt = self.B[:, tau].transpose(0, 2, 1)
            qu = gu[:, tau] + (Bt @ p[..., None])[..., 0]
            kff[:, tau] = -np.linalg.solve(self.Quu[:, tau], qu[..., None])[..., 0]
            p = gz[:, tau] + (At @ p[..., None])[..., 0] + (
                self.Qzu[:, tau] @ kff[:, tau, :, None]
            )[..., 0]
        dz = np.zeros((n, T + 1, 4))
        du = np.empty((n, T, 2))
        for tau in range(T):
            du[:, tau] = (self.K[:, tau] @ dz[:, tau, :, None])[..., 0] + kff[:, tau]
            dz[:, tau + 1] = (self.A[:, tau] @ dz[:, tau, :, None])[..., 0] + (
                self.B[:, tau] @ du[:, tau, :, None]
            )[..., 0]
        return dz, du


def _batch_riccati_regularized(A, B, Hz, Hu) -> BatchRiccati:
    """Build the gain sweep, escalating a ridge on factorization failure."""
    mu = 0.0
    for _ in range(8):
        try:
            return BatchRiccati(A, B, Hz, Hu, mu=mu)
        except np.linalg.LinAlgError:
            mu = 1e-8 if mu == 0.0 else mu * 10.0
    raise NumericalError("Riccati factorization failed after regularization")


def solve_lqr(sub: LqrSubproblem) -> tuple[np.ndarray, np.ndarray]:
    """Exact minimizer of one agent's subproblem under its dynamics chain.

    Backward Riccati recursion plus forward rollout; a ridge of 1e-8,
    escalated tenfold on failure, guards rank-deficient penalty Hessians.

    Raises:
        NumericalError: if no regularization level yields a valid sweep.
    """
    batch = _batch_riccati_regularized(
        sub.A[None], sub.B[None], sub.Hz[None], sub.Hu[None]
    )
    dz, du = batch.solve(sub.gz[None], sub.gu[None])
    return dz[0], du[0]


def stack_decision(dz: np.ndarray, du: np.ndarray) -> np.ndarray:
    """Interleave (T+1, 4) states and (T, 2) inputs into a (6T+4,) vector."""
    T = len(du)
    out = np.empty(n_decision(T))
    for tau in range(T):
        out[z_slice(tau)] = dz[tau]
        out[u_slice(tau)] = du[tau]
    out[z_slice(T)] = dz[T]
    return out


# ---------------------------------------------------------------------------
# Dual state containers
# ---------------------------------------------------------------------------


@dataclass
class DualState:
    """Reduced dual memory of the production solver.

    Pair-block arrays are (N, n_pair_rows) but agent i only ever writes the
    rows it carries; box blocks keep the owner's own copy (``*_self``) and the
    single shared non-owner copy (``*_shared``) per owner.
    """

    p1: np.ndarray
    s1: np.ndarray
    r1: np.ndarray
    y1: np.ndarray
    x1: np.ndarray
    p2_self: np.ndarray
    s2_self: np.ndarray
    r2_self: np.ndarray
    y2_self: np.ndarray
    x2_self: np.ndarray
    p2_shared: np.ndarray
    s2_shared: np.ndarray
    r2_shared: np.ndarray
    y2_shared: np.ndarray
    x2_shared: np.ndarray

    @staticmethod
    def zeros(n_agents: int, n_pair_rows: int, n_box: int) -> "DualState":
        mk1 = lambda: np.zeros((n_agents, n_pair_rows))
        mk2 = lambda: np.zeros((n_agents, n_box))
        return DualState(
            p1=mk1(), s1=mk1(), r1=mk1(), y1=mk1(), x1=mk1(),
            p2_self=mk2(), s2_self=mk2(), r2_self=mk2(), y2_self=mk2(), x2_self=mk2(),
            p2_shared=mk2(), s2_shared=mk2(), r2_shared=mk2(), y2_shared=mk2(), x2_shared=mk2(),
        )


@dataclass
class NaiveDualState:
    """Full-width duals of the baseline: one stacked vector per agent."""

    p: np.ndarray
    s: np.ndarray
    r: np.ndarray
    y: np.ndarray
    x: np.ndarray

    @staticmethod
    def zeros(n_agents: int, width: int) -> "NaiveDualState":
        mk = lambda: np.zeros((n_agents, width))
        return NaiveDualState(p=mk(), s=mk(), r=mk(), y=mk(), x=mk())


@dataclass
class SolveResult:
    states: np.ndarray  # (N, T+1, 4)
    controls: np.ndarray  # (N, T, 2)
    outer_iterations: int
    dz_inf_history: list[float]
    dual_ops: int  # counted elementwise dual-update work, summed over sweeps
    inner_sweeps: int
    wall_time: float
    pair_duals: dict = None  # final pair-block duals keyed by member-id pairs

    @property
    def dual_ops_per_sweep(self) -> float:
        return self.dual_ops / max(self.inner_sweeps, 1)


# ---------------------------------------------------------------------------
# Dual update steps
# ---------------------------------------------------------------------------


def dual_update_collision(
    i: int,
    duals: DualState,
    y_prev: np.ndarray,
    rows_i: np.ndarray,
    neighbors_i: list[int],
    k_share_i: np.ndarray,
    cfg: SolverConfig,
    counter: list,
) -> None:
    """p/s/r sweep of the pair-constraint block for one agent (in place)."""
    w = len(rows_i)
    if w == 0:
        return
    yi = y_prev[i, rows_i]
    acc_diff = np.zeros(w)
    acc_sum = np.zeros(w)
    for j in neighbors_i:
        yj = y_prev[j, rows_i]
        acc_diff = acc_diff + (yi - yj)
        acc_sum = acc_sum + (yi + yj)
    duals.p1[i, rows_i] += cfg.rho * acc_diff
    duals.s1[i, rows_i] += cfg.sigma * (yi - duals.x1[i, rows_i])
    duals.r1[i, rows_i] = (
        cfg.sigma * duals.x1[i, rows_i]
        + cfg.rho * acc_sum
        - (k_share_i + duals.p1[i, rows_i] + duals.s1[i, rows_i])
    )
    counter[0] += w * (4 * len(neighbors_i) + 11)


def dual_update_box(
    i: int,
    duals: DualState,
    y2s_prev: np.ndarray,
    y2h_prev: np.ndarray,
    degree: int,
    cfg: SolverConfig,
    counter: list,
) -> None:
    """p/s/r sweep of the box block: owner's copy plus the shared copy.

    The owner update multiplies the single consensus difference by its degree;
    the shared copy sees the owner through one neighbor term.  Both collapse
    the literal per-neighbor sums exactly when all non-owner copies agree,
    which zero initialization guarantees.  The constraint offset of box rows
    is identically zero and is omitted.
    """
    rho, sigma = cfg.rho, cfg.sigma
    deg = float(degree)
    duals.p2_self[i] += rho * deg * (y2s_prev[i] - y2h_prev[i])
    duals.s2_self[i] += sigma * (y2s_prev[i] - duals.x2_self[i])
    duals.r2_self[i] = (
        sigma * duals.x2_self[i]
        + rho * deg * (y2s_prev[i] + y2h_prev[i])
        - (duals.p2_self[i] + duals.s2_self[i])
    )
    duals.p2_shared[i] += rho * (y2h_prev[i] - y2s_prev[i])
    duals.s2_shared[i] += sigma * (y2h_prev[i] - duals.x2_shared[i])
    duals.r2_shared[i] = (
        sigma * duals.x2_shared[i]
        + rho * (2.0 * deg - 1.0) * y2h_prev[i]
        + rho * y2s_prev[i]
        - (duals.p2_shared[i] + duals.s2_shared[i])
    )
    counter[0] += len(y2s_prev[i]) * 26


# ---------------------------------------------------------------------------
# Shared per-solve context
# ---------------------------------------------------------------------------


class _OuterContext:
    """Per-outer-iteration caches: Hessians, gain sweep, gradient scaffolds."""

    def __init__(self, ocp: AssembledOCP, gammas: list[float]):
        self.ocp = ocp
        self.gammas = gammas
        n, T = ocp.n_agents, ocp.T
        e_v = np.array([0.0, 0.0, 0.0, 1.0])
        self.Hz = np.empty((n, T + 1, 4, 4))
        self.Hu = np.empty((n, T, 2, 2))
        self.gz0 = np.empty((n, T + 1, 4))
        self.gu0 = np.empty((n, T, 2))
        self.jt = []  # per agent: (T+1, 2*n_own, 4) stacked own-row Jacobians
        for i in range(n):
            g2 = 2.0 * gammas[i]
            jac = ocp.coupling.jac[i]
            n_own = jac.shape[0]
            jt = jac.transpose(1, 0, 2, 3).reshape(T + 1, 2 * n_own, 4)
            self.jt.append(jt)
            vv = g2 * np.outer(e_v, e_v)
            for tau in range(T + 1):
                H = np.diag(ocp.l2_diag[i][z_slice(tau)]) + vv
                if n_own:
                    H = H + g2 * (jt[tau].T @ jt[tau])
                self.Hz[i, tau] = H
                self.gz0[i, tau] = ocp.l1[i][z_slice(tau)]
                if tau < T:
                    self.Hu[i, tau] = np.diag(ocp.l2_diag[i][u_slice(tau)]) + g2 * np.eye(2)
                    self.gu0[i, tau] = ocp.l1[i][u_slice(tau)]
        self.riccati = _batch_riccati_regularized(ocp.A, ocp.B, self.Hz, self.Hu)

    def gradients(self, r_pair_own: list[np.ndarray], r_box_self: np.ndarray):
        """Per-sweep gradients from the current r duals (own rows only)."""
        ocp = self.ocp
        n, T = ocp.n_agents, ocp.T
        gz = self.gz0.copy()
        gu = self.gu0.copy()
        for i in range(n):
            g2 = 2.0 * self.gammas[i]
            box = r_box_self[i]
            rbv = np.empty(T + 1)
            rbv[:T] = box[0 : 3 * T : 3]
            rbv[T] = box[3 * T]
            gz[i, :, 3] += g2 * rbv
            if len(r_pair_own[i]):
                rows = r_pair_own[i].reshape(T + 1, -1)
                gz[i] += g2 * np.einsum("tkx,tk->tx", self.jt[i], rows)
            gu[i, :, 0] += g2 * box[2 : 3 * T : 3]
            gu[i, :, 1] += g2 * box[1 : 3 * T : 3]
        return gz, gu


def _local_topology(subgraph: Subgraph) -> tuple[list[list[int]], list[int]]:
    local = {mid: k for k, mid in enumerate(subgraph.members)}
    neighbors = [
        sorted(local[x] for x in subgraph.neighbors[mid]) for mid in subgraph.members
    ]
    return neighbors, [len(ns) for ns in neighbors]


def _check_start_clear(ocp: AssembledOCP) -> None:
    lay = ocp.coupling.layout
    if lay.pairs and lay.n_rows:
        first_step = ocp.coupling.khat[: lay.rows_per_step]
        if np.any(first_step < 1.0):
            worst = int(np.argmin(first_step))
            pair = lay.pairs[worst // 2]
            raise InfeasibleStart(
                f"members {ocp.subgraph.members[pair[0]]} and "
                f"{ocp.subgraph.members[pair[1]]} overlap at the start "
                f"(normalized distance {first_step[worst]:.3f} < 1)"
            )


def _own_jdz(ocp: AssembledOCP, i: int, dz: np.ndarray) -> np.ndarray:
    """Values of agent i's pair-constraint rows at dZ, flattened like own_rows."""
    jac = ocp.coupling.jac[i]
    if jac.shape[0] == 0:
        return np.zeros(0)
    vals = np.einsum("ntcx,tx->tnc", jac, dz)  # step-major, then pair slot, circle
    return vals.reshape(-1)


def _box_of(dz: np.ndarray, du: np.ndarray) -> np.ndarray:
    """O dZ: stacked (dv, ddelta, da) per step plus terminal dv."""
    T = len(du)
    out = np.empty(n_box_rows(T))
    out[0 : 3 * T : 3] = dz[:T, 3]
    out[1 : 3 * T : 3] = du[:, 1]
    out[2 : 3 * T : 3] = du[:, 0]
    out[3 * T] = dz[T, 3]
    return out


def _advance_nominal(
    cfg: SolverConfig,
    geoms: list[VehicleGeometry],
    z_nom: np.ndarray,
    u_nom: np.ndarray,
    dzs: np.ndarray,
    dus: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Apply the inner-loop solution and re-roll the nominal through the model."""
    z_new = np.empty_like(z_nom)
    u_new = np.empty_like(u_nom)
    dz_inf = max(float(np.abs(dzs).max()), float(np.abs(dus).max()))
    for i in range(len(z_nom)):
        u_new[i] = u_nom[i] + dus[i]
        try:
            z_new[i] = rollout(
                VehicleState.from_array(z_nom[i, 0]), u_new[i], cfg.dt, geoms[i]
            )
        except Exception as exc:
            raise NumericalError(f"nominal rollout left the model domain: {exc}") from exc
    return z_new, u_new, dz_inf


# ---------------------------------------------------------------------------
# Production solver
# ---------------------------------------------------------------------------


def _carried_rows(ocp: AssembledOCP) -> list[np.ndarray]:
    """Row indices each agent tracks: pairs incident to itself or a neighbor."""
    lay = ocp.coupling.layout
    rows = []
    for i in range(ocp.n_agents):
        pair_ids = np.flatnonzero(ocp.coupling.carrier_mask[i])
        idx = np.array(
            [
                lay.row(tau, int(p), c)
                for tau in range(lay.T + 1)
                for p in pair_ids
                for c in (0, 1)
            ],
            dtype=int,
        )
        rows.append(idx)
    return rows


def pair_dual_inits(
    subgraph: Subgraph, T: int, cache: dict, shift: int
) -> tuple[np.ndarray, np.ndarray] | None:
    """Seed pair-block duals from a previous epoch's converged values.

    ``cache`` maps global member-id pairs to (y_rows, x_rows) arrays of shape
    (T+1, 2); entries are advanced by ``shift`` executed steps with the final
    knot held.  Every carrier of a pair receives the same seed, so the
    consensus starts agreed.  Returns None when nothing in the cache applies.
    """
    from .assembly import CouplingLayout

    local = {mid: k for k, mid in enumerate(subgraph.members)}
    pairs = tuple(
        sorted({(min(local[a], local[b]), max(local[a], local[b])) for a, b in subgraph.edges})
    )
    if not pairs:
        return None
    lay = CouplingLayout(n_agents=len(subgraph.members), T=T, pairs=pairs)
    y1 = np.zeros((len(subgraph.members), lay.n_rows))
    x1 = np.zeros_like(y1)
    hit = False
    members = subgraph.members
    for pair_idx, (a, b) in enumerate(pairs):
        key = (members[a], members[b])
        if key not in cache:
            continue
        hit = True
        y_rows, x_rows = cache[key]
        for tau in range(T + 1):
            src = min(tau + shift, T)
            for c in (0, 1):
                r = lay.row(tau, pair_idx, c)
                y1[:, r] = y_rows[src, c]
                x1[:, r] = x_rows[src, c]
    return (y1, x1) if hit else None


def extract_pair_duals(subgraph: Subgraph, T: int, duals: DualState) -> dict:
    """Final pair-block duals keyed by global member-id pairs (for reuse)."""
    from .assembly import CouplingLayout

    local = {mid: k for k, mid in enumerate(subgraph.members)}
    pairs = tuple(
        sorted({(min(local[a], local[b]), max(local[a], local[b])) for a, b in subgraph.edges})
    )
    lay = CouplingLayout(n_agents=len(subgraph.members), T=T, pairs=pairs)
    out = {}
    members = subgraph.members
    for pair_idx, (a, b) in enumerate(pairs):
        y_rows = np.empty((T + 1, 2))
        x_rows = np.empty((T + 1, 2))
        for tau in range(T + 1):
            for c in (0, 1):
                r = lay.row(tau, pair_idx, c)
                y_rows[tau, c] = duals.y1[a, r]
                x_rows[tau, c] = duals.x1[a, r]
        out[(members[a], members[b])] = (y_rows, x_rows)
    return out


def admm_solve_subgraph(
    subgraph: Subgraph,
    z_nom: np.ndarray,
    u_nom: np.ndarray,
    refs: np.ndarray,
    geoms: list[VehicleGeometry],
    cfg: SolverConfig,
    recorder=None,
    trace=None,
    pair_dual_seed: tuple[np.ndarray, np.ndarray] | None = None,
) -> SolveResult:
    """Plan one subgraph with the reduced consensus solver.

    Args:
        subgraph: members and communication topology.
        z_nom: (N, T+1, 4) nominal state knots (row 0 is the fixed start).
        u_nom: (N, T, 2) nominal inputs.
        refs: (N, T+1, 4) tracking references [x, y, phi, v].
        geoms: per-member footprints.
        cfg: solver parameters.
        recorder: optional callable ``(outer, inner, duals, dzs, dus)`` invoked
            after every inner sweep (testing/diagnostics hook).
        trace: optional text stream receiving per-sweep CSV diagnostics
            (outer, inner, agent, |dZ|_inf, linearized safety margin).
        pair_dual_seed: optional (y1, x1) arrays from
            :func:`pair_dual_inits`, carrying avoidance pressure over from the
            previous receding-horizon epoch.

    Returns:
        SolveResult with the refreshed trajectories and controls; its
        ``pair_duals`` attribute holds the final pair-block duals for reuse.

    Raises:
        InfeasibleStart: initial states geometrically overlap.
        NumericalError: a factorization or rollout failed.
    """
    t0 = time.perf_counter()
    neighbors, degrees = _local_topology(subgraph)
    n = len(subgraph.members)
    T = u_nom.shape[1]
    z_nom = np.array(z_nom, dtype=float)
    u_nom = np.array(u_nom, dtype=float)
    gammas = [cfg.gamma(d) for d in degrees]
    counter = [0]
    sweeps = 0
    dz_hist: list[float] = []
    y_warm = x_warm = None
    if pair_dual_seed is not None:
        y_warm, x_warm = pair_dual_seed
    outer_done = 0

    for outer in range(cfg.outer_max):
        ocp = assemble_subgraph(subgraph, refs, z_nom, u_nom, geoms, cfg)
        if outer == 0:
            _check_start_clear(ocp)
        ctx = _OuterContext(ocp, gammas)
        lay = ocp.coupling.layout
        rows = _carried_rows(ocp)
        if lay.pairs:
            counts = np.tile(np.repeat(ocp.coupling.carrier_count.astype(float), 2), T + 1)
        else:
            counts = np.zeros(0)
        k_share = [
            ocp.coupling.offset[rows[i]] / counts[rows[i]] if len(rows[i]) else np.zeros(0)
            for i in range(n)
        ]
        own_pos = [np.searchsorted(rows[i], ocp.coupling.own_rows[i]) for i in range(n)]

        duals = DualState.zeros(n, lay.n_rows, n_box_rows(T))
        if y_warm is not None:
            duals.y1[:] = y_warm
            duals.x1[:] = x_warm

        dzs = np.zeros((n, T + 1, 4))
        dus = np.zeros((n, T, 2))
        for inner in range(cfg.k_max):
            y1_prev = duals.y1.copy()
            y2s_prev = duals.y2_self.copy()
            y2h_prev = duals.y2_shared.copy()
            for i in range(n):
                dual_update_collision(
                    i, duals, y1_prev, rows[i], neighbors[i], k_share[i], cfg, counter
                )
                dual_update_box(i, duals, y2s_prev, y2h_prev, degrees[i], cfg, counter)
            gz, gu = ctx.gradients(
                [duals.r1[i, ocp.coupling.own_rows[i]] for i in range(n)],
                duals.r2_self,
            )
            dzs, dus = ctx.riccati.solve(gz, gu)
            for i in range(n):
                g2 = 2.0 * gammas[i]
                if len(rows[i]):
                    jdz = np.zeros(len(rows[i]))
                    jdz[own_pos[i]] = _own_jdz(ocp, i, dzs[i])
                    y_new = g2 * (jdz + duals.r1[i, rows[i]])
                    duals.y1[i, rows[i]] = y_new
                    a = duals.s1[i, rows[i]] / cfg.sigma + y_new
                    duals.x1[i, rows[i]], _ = project_box_cone(a, cfg.epsilon, np.inf)
                    counter[0] += len(rows[i]) * 8
                duals.y2_self[i] = g2 * (_box_of(dzs[i], dus[i]) + duals.r2_self[i])
                a2 = duals.s2_self[i] / cfg.sigma + duals.y2_self[i]
                duals.x2_self[i], _ = project_box_cone(a2, ocp.box[i].lower, ocp.box[i].upper)
                duals.y2_shared[i] = g2 * duals.r2_shared[i]
                a2h = duals.s2_shared[i] / cfg.sigma + duals.y2_shared[i]
                duals.x2_shared[i], _ = project_box_cone(a2h, ocp.box[i].lower, ocp.box[i].upper)
                counter[0] += n_box_rows(T) * 16
            sweeps += 1
            if recorder is not None:
                recorder(outer, inner, duals, dzs, dus)
            if trace is not None:
                _write_trace(trace, outer, inner, ocp, dzs)

        z_nom, u_nom, dz_inf = _advance_nominal(cfg, geoms, z_nom, u_nom, dzs, dus)
        y_warm, x_warm = duals.y1.copy(), duals.x1.copy()
        final_duals = duals
        dz_hist.append(dz_inf)
        outer_done = outer + 1
        if dz_inf < cfg.outer_tol:
            break

    return SolveResult(
        states=z_nom,
        controls=u_nom,
        outer_iterations=outer_done,
        dz_inf_history=dz_hist,
        dual_ops=counter[0],
        inner_sweeps=sweeps,
        wall_time=time.perf_counter() - t0,
        pair_duals=extract_pair_duals(subgraph, T, final_duals),
    )


def _write_trace(trace, outer: int, inner: int, ocp: AssembledOCP, dzs: np.ndarray) -> None:
    lin = ocp.coupling.khat.copy()
    for j in range(ocp.n_agents):
        lin[ocp.coupling.own_rows[j]] += _own_jdz(ocp, j, dzs[j])
    for i in range(ocp.n_agents):
        own = ocp.coupling.own_rows[i]
        margin = float(np.min(lin[own]) - ocp.cfg.d_safe) if len(own) else float("inf")
        trace.write(f"{outer},{inner},{i},{np.abs(dzs[i]).max():.6e},{margin:.6e}\n")


# ---------------------------------------------------------------------------
# Naive baseline
# ---------------------------------------------------------------------------


def admm_solve_naive(
    subgraph: Subgraph,
    z_nom: np.ndarray,
    u_nom: np.ndarray,
    refs: np.ndarray,
    geoms: list[VehicleGeometry],
    cfg: SolverConfig,
    recorder=None,
) -> SolveResult:
    """Baseline solver with full-width dual vectors and literal neighbor sums.

    Same contract as :func:`admm_solve_subgraph`; kept as the in-repo oracle
    and for scaling comparisons.  The stacked dual width is
    ``n_all_pair_rows + (3T+1) N`` per agent regardless of topology.
    """
    t0 = time.perf_counter()
    neighbors, degrees = _local_topology(subgraph)
    n = len(subgraph.members)
    T = u_nom.shape[1]
    z_nom = np.array(z_nom, dtype=float)
    u_nom = np.array(u_nom, dtype=float)
    gammas = [cfg.gamma(d) for d in degrees]
    counter = [0]
    sweeps = 0
    dz_hist: list[float] = []
    y_warm = x_warm = None
    outer_done = 0
    nb = n_box_rows(T)

    for outer in range(cfg.outer_max):
        ocp = assemble_subgraph(subgraph, refs, z_nom, u_nom, geoms, cfg, pairs=all_pairs(n))
        if outer == 0:
            _check_start_clear(ocp)
        ctx = _OuterContext(ocp, gammas)
        lay = ocp.coupling.layout
        r1w = lay.n_rows
        width = r1w + nb * n
        k_share = np.concatenate([ocp.coupling.offset, np.zeros(nb * n)]) / n
        lower = np.concatenate([np.full(r1w, cfg.epsilon)] + [b.lower for b in ocp.box])
        upper = np.concatenate([np.full(r1w, np.inf)] + [b.upper for b in ocp.box])

        duals = NaiveDualState.zeros(n, width)
        if y_warm is not None:
            duals.y[:, :r1w] = y_warm
            duals.x[:, :r1w] = x_warm

        dzs = np.zeros((n, T + 1, 4))
        dus = np.zeros((n, T, 2))
        for inner in range(cfg.k_max):
            y_prev = duals.y.copy()
            for i in range(n):
                yi = y_prev[i]
                acc_diff = np.zeros(width)
                acc_sum = np.zeros(width)
                for j in neighbors[i]:
                    yj = y_prev[j]
                    acc_diff = acc_diff + (yi - yj)
                    acc_sum = acc_sum + (yi + yj)
                duals.p[i] += cfg.rho * acc_diff
                duals.s[i] += cfg.sigma * (yi - duals.x[i])
                duals.r[i] = (
                    cfg.sigma * duals.x[i]
                    + cfg.rho * acc_sum
                    - (k_share + duals.p[i] + duals.s[i])
                )
                counter[0] += width * (4 * len(neighbors[i]) + 11)
            gz, gu = ctx.gradients(
                [duals.r[i, ocp.coupling.own_rows[i]] for i in range(n)],
                duals.r[:, r1w:].reshape(n, n, nb)[np.arange(n), np.arange(n)],
            )
            dzs, dus = ctx.riccati.solve(gz, gu)
            for i in range(n):
                g2 = 2.0 * gammas[i]
                jdz = np.zeros(width)
                jdz[ocp.coupling.own_rows[i]] = _own_jdz(ocp, i, dzs[i])
                jdz[r1w + nb * i : r1w + nb * (i + 1)] = _box_of(dzs[i], dus[i])
                duals.y[i] = g2 * (jdz + duals.r[i])
                a = duals.s[i] / cfg.sigma + duals.y[i]
                duals.x[i], _ = project_box_cone(a, lower, upper)
                counter[0] += width * 8
            sweeps += 1
            if recorder is not None:
                recorder(outer, inner, duals, dzs, dus)

        z_nom, u_nom, dz_inf = _advance_nominal(cfg, geoms, z_nom, u_nom, dzs, dus)
        y_warm, x_warm = duals.y[:, :r1w].copy(), duals.x[:, :r1w].copy()
        dz_hist.append(dz_inf)
        outer_done = outer + 1
        if dz_inf < cfg.outer_tol:
            break

    return SolveResult(
        states=z_nom,
        controls=u_nom,
        outer_iterations=outer_done,
        dz_inf_history=dz_hist,
        dual_ops=counter[0],
        inner_sweeps=sweeps,
        wall_time=time.perf_counter() - t0,
    )
