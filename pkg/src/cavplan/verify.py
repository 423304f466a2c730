"""Self-check suites and synthetic benchmark instances.

The CLI ``verify`` subcommand and the acceptance tests both run these: each
check pits a production code path against an independent reference (dense
KKT factorization, literal dual transcription, finite differences, union-find)
at a fixed tolerance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import admm, oracle
from .assembly import (
    SolverConfig,
    all_pairs,
    assemble_subgraph,
    box_limits,
    l3_l4_dense,
    n_box_rows,
    n_decision,
    u_slice,
    z_slice,
)
from .partition import FleetSnapshot, Subgraph, build_partition, safe_distance, wrap_heading_gap
from .vehicle import ControlInput, VehicleGeometry, VehicleState, linearize_dynamics, rollout


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_valid_state_input(rng, limits=None) -> tuple[VehicleState, ControlInput]:
    """A state/input pair safely inside the bicycle model's validity region."""
    z = VehicleState(
        x=float(rng.uniform(-50, 50)),
        y=float(rng.uniform(-50, 50)),
        theta=float(rng.uniform(-math.pi, math.pi)),
        v=float(rng.uniform(0.0, 20.0)),
    )
    u = ControlInput(a=float(rng.uniform(-5, 3)), delta=float(rng.uniform(-0.6, 0.6)))
    return z, u


def complete_subgraph(members) -> Subgraph:
    members = tuple(members)
    edges = tuple((a, b) for k, a in enumerate(members) for b in members[k + 1 :])
    neighbors = {m: tuple(x for x in members if x != m) for m in members}
    return Subgraph(members=members, edges=edges, neighbors=neighbors, radio_connected=True)


def chain_subgraph(members) -> Subgraph:
    members = tuple(members)
    edges = tuple((members[k], members[k + 1]) for k in range(len(members) - 1))
    return _subgraph_from_edges(members, edges)


def ring_subgraph(members) -> Subgraph:
    """Cycle topology: uniform degree 2, no chain-boundary effects."""
    members = tuple(members)
    edges = tuple(
        (min(members[k], members[(k + 1) % len(members)]),
         max(members[k], members[(k + 1) % len(members)]))
        for k in range(len(members))
    )
    return _subgraph_from_edges(members, tuple(sorted(set(edges))))


def _subgraph_from_edges(members, edges) -> Subgraph:
    neighbor_sets = {m: [] for m in members}
    for a, b in edges:
        neighbor_sets[a].append(b)
        neighbor_sets[b].append(a)
    neighbors = {m: tuple(sorted(v)) for m, v in neighbor_sets.items()}
    return Subgraph(members=members, edges=edges, neighbors=neighbors, radio_connected=True)


def line_fleet_instance(
    n: int, cfg: SolverConfig, rng, lane_shift: float = 0.5, spacing: float = 9.0
):
    """Synthetic single-subgraph instance: a convoy on one straight road.

    Nominals are consistent straight-line rollouts; references ask for a small
    lane correction so the primal step does real work.
    """
    T = cfg.horizon
    geom = VehicleGeometry()
    z_nom = np.empty((n, T + 1, 4))
    u_nom = np.zeros((n, T, 2))
    refs = np.empty((n, T + 1, 4))
    for i in range(n):
        start = VehicleState(x=i * spacing, y=0.0, theta=0.0, v=10.0)
        z_nom[i] = rollout(start, u_nom[i], cfg.dt, geom)
        refs[i] = z_nom[i]
        refs[i, :, 1] += lane_shift * (1.0 if i % 2 == 0 else -1.0)
    return z_nom, u_nom, refs, [geom] * n


def circle_fleet_instance(
    n: int, cfg: SolverConfig, lane_shift: float = 0.5, spacing: float = 9.0
):
    """Convoy placed around a closed loop; pairs with a ring topology."""
    T = cfg.horizon
    geom = VehicleGeometry()
    radius = n * spacing / (2.0 * math.pi)
    z_nom = np.empty((n, T + 1, 4))
    u_nom = np.zeros((n, T, 2))
    refs = np.empty((n, T + 1, 4))
    for i in range(n):
        ang = 2.0 * math.pi * i / n
        start = VehicleState(
            x=radius * math.cos(ang),
            y=radius * math.sin(ang),
            theta=ang + math.pi / 2.0,
            v=10.0,
        )
        z_nom[i] = rollout(start, u_nom[i], cfg.dt, geom)
        refs[i] = z_nom[i]
        refs[i, :, 3] = 10.0 + lane_shift * (1.0 if i % 2 == 0 else -1.0)
    return z_nom, u_nom, refs, [geom] * n


def random_lqr_instance(rng, T: int, cfg: SolverConfig | None = None):
    """A structured quadratic over a random linearized dynamics chain.

    Returns the stage-wise subproblem plus the equivalent dense (H, g, Aeq)
    with the initial state pinned to zero.
    """
    cfg = cfg or SolverConfig(horizon=max(T, 1), exec_horizon=1)
    geom = VehicleGeometry()
    A = np.empty((T, 4, 4))
    B = np.empty((T, 4, 2))
    for tau in range(T):
        z, u = random_valid_state_input(rng)
        lin = linearize_dynamics(z, u, cfg.dt, geom)
        A[tau], B[tau] = lin.A, lin.B

    Hz = np.empty((T + 1, 4, 4))
    Hu = np.empty((T, 2, 2))
    gz = rng.normal(size=(T + 1, 4))
    gu = rng.normal(size=(T, 2))
    for tau in range(T + 1):
        M = rng.normal(size=(4, 4))
        Hz[tau] = M @ M.T + 0.5 * np.eye(4)
    for tau in range(T):
        M = rng.normal(size=(2, 2))
        Hu[tau] = M @ M.T + 0.5 * np.eye(2)

    sub = admm.LqrSubproblem(A=A, B=B, Hz=Hz, Hu=Hu, gz=gz, gu=gu)

    nd = n_decision(T)
    H = np.zeros((nd, nd))
    g = np.zeros(nd)
    for tau in range(T + 1):
        H[z_slice(tau), z_slice(tau)] = Hz[tau]
        g[z_slice(tau)] = gz[tau]
        if tau < T:
            H[u_slice(tau), u_slice(tau)] = Hu[tau]
            g[u_slice(tau)] = gu[tau]
    L3, L4 = l3_l4_dense(A, B)
    pin = np.zeros((4, nd))
    pin[:, :4] = np.eye(4)
    Aeq = np.vstack([pin, L3 - L4])
    return sub, oracle.DenseQP(H=H, g=g, Aeq=Aeq, beq=np.zeros(len(Aeq)))


def random_snapshot(rng, m: int, box: float = 340.0) -> FleetSnapshot:
    return FleetSnapshot.from_lists(
        ids=range(m),
        xy=rng.uniform(-box, box, size=(m, 2)),
        heading=rng.uniform(-math.pi, math.pi, size=m),
        v_ref=rng.uniform(5.0, 20.0, size=m),
        r_tele=np.full(m, 50.0),
    )


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: {self.detail}"


def check_moreau(n_vectors: int = 100_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    v = rng.uniform(-4, 4, size=n_vectors)
    lo = rng.uniform(-2, 0, size=n_vectors)
    hi = lo + rng.uniform(0, 2, size=n_vectors)
    x, lam = admm.project_box_cone(v, lo, hi)
    err = float(np.abs((x + lam) - v).max())
    in_box = bool(np.all(lam >= lo) and np.all(lam <= hi))
    ok = err <= 1e-15 and in_box
    return CheckResult("moreau-identity", ok, f"max |x + lam - v| = {err:.2e}")


def check_dynamics_jacobians(samples: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    geom = VehicleGeometry()
    dt = 0.1
    worst = 0.0
    for _ in range(samples):
        z, u = random_valid_state_input(rng)
        lin = linearize_dynamics(z, u, dt, geom)

        def step_of(vec):
            out = admm.rollout(
                VehicleState.from_array(vec[:4]),
                vec[4:6].reshape(1, 2),
                dt,
                geom,
            )
            return out[1]

        x0 = np.concatenate([z.as_array(), u.as_array()])
        fd = oracle.central_difference_jacobian(step_of, x0)
        analytic = np.hstack([lin.A, lin.B])
        scale = max(1.0, float(np.abs(analytic).max()))
        worst = max(worst, float(np.abs(analytic - fd).max()) / scale)
    ok = worst <= 1e-5
    return CheckResult("dynamics-jacobians", ok, f"worst scaled error {worst:.2e}")


def check_collision_jacobians(samples: int = 1000, seed: int = 2) -> CheckResult:
    from . import geometry

    rng = np.random.default_rng(seed)
    geom = VehicleGeometry()
    worst = 0.0
    tested = 0
    while tested < samples:
        zc, _ = random_valid_state_input(rng)
        ze, _ = random_valid_state_input(rng)
        if math.hypot(zc.x - ze.x, zc.y - ze.y) < 1.0:
            continue
        which = geometry.FRONT if rng.integers(2) == 0 else geometry.REAR
        jac = geometry.collision_jacobians(zc, ze, which, geom, geom)

        def norm_of(vec):
            z_c = VehicleState.from_array(vec[:4])
            z_e = VehicleState.from_array(vec[4:])
            d = geometry.circle_distance(geom, which)
            center = z_c.position + d * np.array([math.cos(z_c.theta), math.sin(z_c.theta)])
            return np.array([geometry.pair_transform(center, z_e, geom, geom).norm])

        x0 = np.concatenate([zc.as_array(), ze.as_array()])
        fd = oracle.central_difference_jacobian(norm_of, x0)[0]
        analytic = np.concatenate([jac.J_circle, jac.J_ellipse])
        scale = max(1.0, float(np.abs(analytic).max()))
        worst = max(worst, float(np.abs(analytic - fd).max()) / scale)
        tested += 1
    ok = worst <= 1e-5
    return CheckResult("collision-jacobians", ok, f"worst scaled error {worst:.2e}")


def check_lqr_kkt(instances: int = 50, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    worst_dyn = 0.0
    for _ in range(instances):
        T = int(rng.integers(1, 6))
        sub, qp = random_lqr_instance(rng, T)
        dz, du = admm.solve_lqr(sub)
        stacked = admm.stack_decision(dz, du)
        ref = oracle.kkt_solve(qp)
        rel = float(np.abs(stacked - ref).max()) / max(1.0, float(np.abs(ref).max()))
        worst_rel = max(worst_rel, rel)
        L3, L4 = l3_l4_dense(sub.A, sub.B)
        worst_dyn = max(worst_dyn, float(np.abs((L3 - L4) @ stacked).max()))
    ok = worst_rel <= 1e-6 and worst_dyn <= 1e-9
    return CheckResult(
        "lqr-vs-kkt", ok, f"worst relative {worst_rel:.2e}, dynamics residual {worst_dyn:.2e}"
    )


def run_equivalence_pair(n: int, T: int, k_max: int, rng, lane_shift: float = 0.4):
    """Run both solver variants on one complete-subgraph instance with
    per-sweep recorders; returns (improved_records, naive_records, layout info)."""
    cfg = SolverConfig(horizon=T, exec_horizon=min(T, 1), k_max=k_max, outer_max=1)
    z_nom, u_nom, refs, geoms = line_fleet_instance(n, cfg, rng, lane_shift=lane_shift)
    sub = complete_subgraph(range(n))

    improved_rec = []
    naive_rec = []

    def rec_improved(outer, inner, duals, dzs, dus):
        improved_rec.append(
            {
                "y1": duals.y1.copy(),
                "p1": duals.p1.copy(),
                "r1": duals.r1.copy(),
                "x1": duals.x1.copy(),
                "p2_self": duals.p2_self.copy(),
                "s2_self": duals.s2_self.copy(),
                "r2_self": duals.r2_self.copy(),
                "y2_self": duals.y2_self.copy(),
                "x2_self": duals.x2_self.copy(),
                "p2_shared": duals.p2_shared.copy(),
                "s2_shared": duals.s2_shared.copy(),
                "r2_shared": duals.r2_shared.copy(),
                "y2_shared": duals.y2_shared.copy(),
                "x2_shared": duals.x2_shared.copy(),
            }
        )

    def rec_naive(outer, inner, duals, dzs, dus):
        naive_rec.append(
            {
                "p": duals.p.copy(),
                "s": duals.s.copy(),
                "r": duals.r.copy(),
                "y": duals.y.copy(),
                "x": duals.x.copy(),
            }
        )

    admm.admm_solve_subgraph(sub, z_nom, u_nom, refs, geoms, cfg, recorder=rec_improved)
    admm.admm_solve_naive(sub, z_nom, u_nom, refs, geoms, cfg, recorder=rec_naive)
    r1w = 2 * len(all_pairs(n)) * (T + 1)
    return improved_rec, naive_rec, r1w, n_box_rows(T)


def box_block_gap(improved_rec, naive_rec, r1w: int, nb: int, n: int) -> float:
    """Max abs gap between reduced and literal iterates over all sweeps."""
    worst = 0.0
    names = [("p", "p2"), ("s", "s2"), ("r", "r2"), ("y", "y2"), ("x", "x2")]
    for imp, nai in zip(improved_rec, naive_rec):
        worst = max(worst, float(np.abs(imp["y1"] - nai["y"][:, :r1w]).max()))
        for full_name, red_name in names:
            full = nai[full_name]
            for owner in range(n):
                block = full[:, r1w + nb * owner : r1w + nb * (owner + 1)]
                worst = max(
                    worst,
                    float(np.abs(block[owner] - imp[f"{red_name}_self"][owner]).max()),
                )
                for v in range(n):
                    if v != owner:
                        worst = max(
                            worst,
                            float(
                                np.abs(block[v] - imp[f"{red_name}_shared"][owner]).max()
                            ),
                        )
    return worst


def check_lemma_equivalence(
    instances: int = 20, sweeps: int = 30, seed: int = 4
) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        n = int(rng.choice([2, 3, 4]))
        T = int(rng.choice([2, 5]))
        imp, nai, r1w, nb = run_equivalence_pair(n, T, sweeps, rng)
        worst = max(worst, box_block_gap(imp, nai, r1w, nb, n))
    ok = worst <= 1e-12
    return CheckResult("box-dual-equivalence", ok, f"max iterate gap {worst:.2e}")


def check_partition_oracle(snapshots: int = 100, m: int = 80, seed: int = 5) -> CheckResult:
    horizon = 1.5
    rng = np.random.default_rng(seed)
    for _ in range(snapshots):
        snap = random_snapshot(rng, m)
        subs = build_partition(snap, horizon)
        # union-find over the same adjacency
        uf = oracle.UnionFind(m)
        for i in range(m):
            for j in range(i + 1, m):
                gap = wrap_heading_gap(snap.heading[i], snap.heading[j])
                thr = safe_distance(snap.v_ref[i], snap.v_ref[j], gap, horizon)
                if float(np.abs(snap.xy[i] - snap.xy[j]).sum()) < thr:
                    uf.union(i, j)
        expected = [tuple(g) for g in uf.groups()]
        got = sorted(tuple(s.members) for s in subs)
        if got != sorted(expected):
            return CheckResult("partition-vs-union-find", False, "component mismatch")
        # cross-subgraph pairs must respect the safe distance
        comp_of = {}
        for idx, s in enumerate(subs):
            for mem in s.members:
                comp_of[mem] = idx
        for i in range(m):
            for j in range(i + 1, m):
                if comp_of[i] != comp_of[j]:
                    gap = wrap_heading_gap(snap.heading[i], snap.heading[j])
                    thr = safe_distance(snap.v_ref[i], snap.v_ref[j], gap, horizon)
                    if float(np.abs(snap.xy[i] - snap.xy[j]).sum()) < thr:
                        return CheckResult(
                            "partition-vs-union-find", False, "unsafe cross-subgraph pair"
                        )
    return CheckResult("partition-vs-union-find", True, f"{snapshots} snapshots agree")


def default_checks() -> list[CheckResult]:
    """The battery behind the ``verify`` CLI subcommand (reduced sample sizes)."""
    return [
        check_moreau(20_000),
        check_dynamics_jacobians(200),
        check_collision_jacobians(200),
        check_lqr_kkt(15),
        check_lemma_equivalence(5),
        check_partition_oracle(10, m=40),
    ]


# ---------------------------------------------------------------------------
# Scaling benchmark
# ---------------------------------------------------------------------------


def bench_scaling(sizes=(4, 8, 16, 32), k_max: int = 10) -> dict:
    """Counted dual-update work and wall time per sweep for both variants.

    The production solver runs on ring topologies (uniform degree 2, no
    chain-boundary effects); the baseline runs fully connected, its
    historical operating assumption.
    """
    out = {"sizes": list(sizes), "improved": {}, "naive": {}}
    for variant, solver, topo in (
        ("improved", admm.admm_solve_subgraph, ring_subgraph),
        ("naive", admm.admm_solve_naive, complete_subgraph),
    ):
        work = []
        wall = []
        for n in sizes:
            cfg = SolverConfig(horizon=15, exec_horizon=1, k_max=k_max, outer_max=1)
            z_nom, u_nom, refs, geoms = circle_fleet_instance(n, cfg)
            sub = topo(range(n))
            t0 = time.perf_counter()
            result = solver(sub, z_nom, u_nom, refs, geoms, cfg)
            wall.append(time.perf_counter() - t0)
            work.append(result.dual_ops_per_sweep)
        slope = float(np.polyfit(np.log(np.asarray(sizes)), np.log(np.asarray(work)), 1)[0])
        out[variant] = {"work_per_sweep": work, "wall_time": wall, "slope": slope}
    return out
