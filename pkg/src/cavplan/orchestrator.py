"""Closed-loop receding-horizon driving.

Each epoch: partition the active fleet, solve every subgraph independently,
execute the first ``exec_horizon`` planned steps through the exact vehicle
model, feed the reached states back, and repartition.  Vehicles are retired
on arrival so late-epoch problems stay small.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import admm
from .assembly import SolverConfig
from .errors import CollisionDetected, NoRoute, ScenarioInfeasible, StepBudgetExceeded
from .geometry import exact_pair_clear, ordering_clearance
from .partition import FleetSnapshot, Subgraph, build_partition
from .roadmap import (
    GuidanceTrajectory,
    RoadGraph,
    WaypointIndex,
    astar_route,
    reference_window,
    smooth_path,
)
from .vehicle import ControlInput, VehicleGeometry, VehicleState, rollout, step_dynamics

#: pairs farther apart than this (centers, meters) cannot overlap and skip the
#: exact hull test: max circle offset + enlarged ellipse major semi-axis, padded
_OVERLAP_SCREEN = 10.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Random-scenario recipe: fleet size, spawn/destination rings, speeds."""

    cav_count: int
    spawn_ring: tuple[float, float]
    dest_ring: tuple[float, float]
    v_ref_range: tuple[float, float]
    seed: int
    map_path: str = ""
    name: str = "scenario"
    center: tuple[float, float] = (0.0, 0.0)
    r_tele: float = 50.0
    goal_tol: float = 3.0
    step_budget: int = 3000
    smooth_window: int = 9
    smooth_order: int = 3
    solver: SolverConfig = field(default_factory=SolverConfig)
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)

    def __post_init__(self):
        for lo, hi in (self.spawn_ring, self.dest_ring, self.v_ref_range):
            if lo > hi:
                raise ValueError("scenario ranges must satisfy lo <= hi")
        if self.cav_count < 1:
            raise ValueError("cav_count must be >= 1")


@dataclass
class VehiclePlan:
    """One fleet member: spawn state, smoothed guidance route, runtime index."""

    vid: int
    spawn: VehicleState
    trajectory: GuidanceTrajectory
    index: WaypointIndex
    v_ref: float
    destination: np.ndarray


def generate_scenario(cfg: ScenarioConfig, graph: RoadGraph) -> list[VehiclePlan]:
    """Sample spawn/destination nodes, route, smooth, and build the fleet.

    Spawns are uniform over map nodes inside the spawn ring around the
    scenario center, rejected while any pair sits closer than two vehicle
    lengths.  Destinations are uniform over nodes whose distance from the
    spawn falls in the destination ring.

    Raises:
        ScenarioInfeasible: sampling failed within the retry budget.
    """
    rng = np.random.default_rng(cfg.seed)
    spawn_candidates = graph.nodes_within_ring(cfg.center, *cfg.spawn_ring)
    if not spawn_candidates:
        raise ScenarioInfeasible("no map nodes inside the spawn ring")
    min_gap = 2.0 * cfg.geometry.length

    fleet: list[VehiclePlan] = []
    for vid in range(cfg.cav_count):
        accepted = None
        for _ in range(200):
            spawn_node = int(rng.choice(spawn_candidates))
            spawn_pos = graph.position(spawn_node)
            if any(
                math.hypot(spawn_pos[0] - q.spawn.x, spawn_pos[1] - q.spawn.y) < min_gap
                for q in fleet
            ):
                continue
            dest_candidates = graph.nodes_within_ring(spawn_pos, *cfg.dest_ring)
            route = None
            for _ in range(50):
                if not dest_candidates:
                    break
                dest_node = int(rng.choice(dest_candidates))
                try:
                    route = astar_route(graph, spawn_node, dest_node)
                    break
                except NoRoute:
                    continue
            if route is None or len(route) < 2:
                continue
            v_ref = float(rng.uniform(*cfg.v_ref_range))
            traj = GuidanceTrajectory.from_route(graph, route, v_ref)
            if len(traj) >= cfg.smooth_window:
                traj = smooth_path(traj, cfg.smooth_window, cfg.smooth_order)
            state = VehicleState(
                x=float(spawn_pos[0]),
                y=float(spawn_pos[1]),
                theta=float(traj.phi[0]),
                v=v_ref,
            )
            # the planner certifies pairs with the ellipse on the lower id;
            # spawn states must already satisfy that ordering with margin
            if all(
                ordering_clearance(state, q.spawn, cfg.geometry, cfg.geometry)
                >= cfg.solver.d_safe
                for q in fleet
            ):
                accepted = VehiclePlan(
                    vid=vid,
                    spawn=state,
                    trajectory=traj,
                    index=WaypointIndex(traj.xy),
                    v_ref=v_ref,
                    destination=traj.xy[-1].copy(),
                )
                break
        if accepted is None:
            raise ScenarioInfeasible(f"could not place vehicle {vid} without overlap")
        fleet.append(accepted)
    return fleet


# ---------------------------------------------------------------------------
# Episode log
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    epoch: int
    step: int
    vid: int
    state: VehicleState
    control: ControlInput
    subgraph: int


@dataclass
class RunLog:
    """Everything an episode produces: per-step rows plus per-epoch metrics."""

    initial: dict[int, VehicleState] = field(default_factory=dict)
    v_ref: dict[int, float] = field(default_factory=dict)
    rows: list[StepRecord] = field(default_factory=list)
    min_distance_trace: list[float] = field(default_factory=list)
    epoch_subgraph_sizes: list[list[int]] = field(default_factory=list)
    epoch_solve_times: list[list[float]] = field(default_factory=list)
    partitions: list[list[Subgraph]] = field(default_factory=list)
    arrived_step: dict[int, int] = field(default_factory=dict)
    steps_executed: int = 0

    @property
    def min_distance(self) -> float:
        return min(self.min_distance_trace) if self.min_distance_trace else math.inf

    def states_of(self, vid: int) -> list[StepRecord]:
        return [r for r in self.rows if r.vid == vid]


def _min_pair_distance(positions: np.ndarray) -> float:
    if len(positions) < 2:
        return math.inf
    diff = positions[:, None, :] - positions[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(len(positions), k=1)
    return float(d[iu].min())


def _check_collisions(ids, states, geom, log) -> None:
    positions = np.array([[states[v].x, states[v].y] for v in ids])
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            if np.linalg.norm(positions[a] - positions[b]) > _OVERLAP_SCREEN:
                continue
            if not exact_pair_clear(states[ids[a]], states[ids[b]], geom, geom):
                raise CollisionDetected(
                    f"vehicles {ids[a]} and {ids[b]} overlap at step {log.steps_executed}",
                    run_log=log,
                )


def _shifted_controls(u_prev: np.ndarray, shift: int) -> np.ndarray:
    """Previous plan advanced by ``shift`` executed steps, zero-padded."""
    tail = u_prev[shift:]
    return np.vstack([tail, np.zeros((shift, 2))])


def run_episode(
    fleet: list[VehiclePlan],
    cfg: ScenarioConfig,
    solver: str = "improved",
    threads: int = 1,
) -> RunLog:
    """Drive the fleet until every vehicle reaches its destination.

    Args:
        fleet: output of :func:`generate_scenario`.
        cfg: scenario configuration (solver settings included).
        solver: ``"improved"`` or ``"naive"`` dual variant.
        threads: worker threads for concurrent subgraph solves.

    Returns:
        RunLog with per-step rows and per-epoch diagnostics.

    Raises:
        CollisionDetected: exact hull overlap during execution.
        StepBudgetExceeded: episode did not finish within the step budget.
    """
    improved = solver == "improved"
    scfg = cfg.solver
    plans = {p.vid: p for p in fleet}
    states: dict[int, VehicleState] = {p.vid: p.spawn for p in fleet}
    active = sorted(states)
    warm: dict[int, np.ndarray] = {}
    dual_cache: dict = {}  # pair-block duals carried between epochs

    log = RunLog(
        initial={p.vid: p.spawn for p in fleet},
        v_ref={p.vid: p.v_ref for p in fleet},
    )
    epoch = 0
    while active:
        snap = FleetSnapshot.from_lists(
            ids=active,
            xy=[[states[v].x, states[v].y] for v in active],
            heading=[states[v].theta for v in active],
            v_ref=[plans[v].v_ref for v in active],
            r_tele=[cfg.r_tele for _ in active],
        )
        subgraphs = build_partition(snap, scfg.partition_horizon)
        log.partitions.append(subgraphs)
        log.epoch_subgraph_sizes.append([len(s) for s in subgraphs])

        def solve_subgraph(sub: Subgraph):
            t0 = time.perf_counter()
            members = sub.members
            T = scfg.horizon
            refs = np.empty((len(members), T + 1, 4))
            z_nom = np.empty((len(members), T + 1, 4))
            u_nom = np.empty((len(members), T, 2))
            for k, vid in enumerate(members):
                plan = plans[vid]
                cur = states[vid]
                refs[k] = reference_window(
                    plan.trajectory, plan.index, (cur.x, cur.y), T, scfg.dt
                )
                # nominal is always a dynamically consistent rollout from the
                # fed-back state: shifted previous plan, or a coasting rollout
                # at the spawn speed on the first epoch
                u_nom[k] = (
                    _shifted_controls(warm[vid], scfg.exec_horizon)
                    if vid in warm
                    else 0.0
                )
                z_nom[k] = rollout(cur, u_nom[k], scfg.dt, cfg.geometry)
            geoms = [cfg.geometry] * len(members)
            if improved:
                seed = admm.pair_dual_inits(sub, T, dual_cache, scfg.exec_horizon)
                result = admm.admm_solve_subgraph(
                    sub, z_nom, u_nom, refs, geoms, scfg, pair_dual_seed=seed
                )
            else:
                result = admm.admm_solve_naive(sub, z_nom, u_nom, refs, geoms, scfg)
            return sub, result, time.perf_counter() - t0

        ordered = sorted(subgraphs, key=lambda s: s.members[0])
        if threads > 1 and len(ordered) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                solved = list(pool.map(solve_subgraph, ordered))
        else:
            solved = [solve_subgraph(s) for s in ordered]

        log.epoch_solve_times.append([wall for _, _, wall in solved])
        epoch_plans: dict[int, tuple[np.ndarray, np.ndarray, int]] = {}
        dual_cache = {}
        for sub_idx, (sub, result, _) in enumerate(solved):
            if result.pair_duals:
                dual_cache.update(result.pair_duals)
            for k, vid in enumerate(sub.members):
                epoch_plans[vid] = (result.states[k], result.controls[k], sub_idx)
                warm[vid] = result.controls[k]

        for local_step in range(scfg.exec_horizon):
            stepping = list(active)
            if not stepping:
                break
            for vid in stepping:
                _, u_plan, sub_idx = epoch_plans[vid]
                u = ControlInput(float(u_plan[local_step, 0]), float(u_plan[local_step, 1]))
                states[vid] = step_dynamics(states[vid], u, scfg.dt, cfg.geometry)
                log.rows.append(
                    StepRecord(
                        epoch=epoch,
                        step=log.steps_executed,
                        vid=vid,
                        state=states[vid],
                        control=u,
                        subgraph=sub_idx,
                    )
                )
            log.steps_executed += 1
            positions = np.array([[states[v].x, states[v].y] for v in stepping])
            log.min_distance_trace.append(_min_pair_distance(positions))
            _check_collisions(stepping, states, cfg.geometry, log)
            for vid in stepping:
                dest = plans[vid].destination
                if math.hypot(states[vid].x - dest[0], states[vid].y - dest[1]) <= cfg.goal_tol:
                    log.arrived_step[vid] = log.steps_executed
                    active.remove(vid)
                    warm.pop(vid, None)
            if log.steps_executed >= cfg.step_budget and active:
                raise StepBudgetExceeded(
                    f"{len(active)} vehicles still driving after {log.steps_executed} steps",
                    run_log=log,
                )
            if not active:
                break
        epoch += 1
    return log


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------


def write_states_csv(log: RunLog, path) -> None:
    """states.csv: one row per executed vehicle step, floats via repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "step", "vehicle", "x", "y", "theta", "v", "a", "delta", "subgraph"]
        )
        for r in log.rows:
            writer.writerow(
                [
                    r.epoch,
                    r.step,
                    r.vid,
                    repr(r.state.x),
                    repr(r.state.y),
                    repr(r.state.theta),
                    repr(r.state.v),
                    repr(r.control.a),
                    repr(r.control.delta),
                    r.subgraph,
                ]
            )


def velocity_histogram(log: RunLog, bins: int = 25) -> dict:
    v = np.array([r.state.v for r in log.rows]) if log.rows else np.zeros(0)
    hi = float(v.max()) if len(v) else 1.0
    counts, edges = np.histogram(v, bins=bins, range=(0.0, max(hi, 1.0)))
    return {"bin_edges": edges.tolist(), "counts": counts.tolist()}


def mean_speed_error(log: RunLog, skip_steps: int = 30) -> float:
    """Mean |v - v_ref| over the steady portion (first ``skip_steps`` dropped)."""
    errs = [
        abs(r.state.v - log.v_ref[r.vid]) for r in log.rows if r.step >= skip_steps
    ]
    if not errs:
        errs = [abs(r.state.v - log.v_ref[r.vid]) for r in log.rows]
    return float(np.mean(errs)) if errs else 0.0


def summarize_metrics(log: RunLog) -> dict:
    return {
        "steps": log.steps_executed,
        "min_distance": None if math.isinf(log.min_distance) else log.min_distance,
        "min_distance_trace": [
            None if math.isinf(d) else d for d in log.min_distance_trace
        ],
        "velocity_hist": velocity_histogram(log),
        "mean_abs_speed_error": mean_speed_error(log),
        "epoch_solve_times": log.epoch_solve_times,
        "subgraph_sizes": log.epoch_subgraph_sizes,
        "arrived": {str(k): v for k, v in sorted(log.arrived_step.items())},
    }


def write_metrics_json(log: RunLog, path) -> None:
    with open(path, "w") as fh:
        json.dump(summarize_metrics(log), fh, indent=1)


def partitions_as_dict(log: RunLog) -> dict:
    return {
        "epochs": [
            {
                "epoch": e,
                "subgraphs": [
                    {
                        "members": list(s.members),
                        "edges": [list(p) for p in s.edges],
                        "radio_connected": s.radio_connected,
                    }
                    for s in subs
                ],
            }
            for e, subs in enumerate(log.partitions)
        ]
    }


def write_partition_json(log: RunLog, path) -> None:
    with open(path, "w") as fh:
        json.dump(partitions_as_dict(log), fh, indent=1)
