"""Command-line entry points: scenario runs, partition dumps, scaling bench, self-checks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import orchestrator, verify
from .assembly import SolverConfig
from .errors import CavPlanError, CollisionDetected, StepBudgetExceeded
from .orchestrator import ScenarioConfig
from .partition import FleetSnapshot, build_partition
from .roadmap import RoadGraph, load_road_graph
from .vehicle import VehicleGeometry, VehicleLimits


def load_scenario(path, seed_override=None) -> tuple[ScenarioConfig, RoadGraph]:
    """Parse a scenario TOML file and its referenced map."""
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    solver_kwargs = dict(data.get("solver", {}))
    for key in ("q_weights", "r_weights"):
        if key in solver_kwargs:
            solver_kwargs[key] = tuple(solver_kwargs[key])
    if "limits" in data:
        solver_kwargs["limits"] = VehicleLimits(**data["limits"])
    solver = SolverConfig(**solver_kwargs)
    geometry = VehicleGeometry(**data.get("geometry", {}))
    cfg = ScenarioConfig(
        cav_count=int(data["cav_count"]),
        spawn_ring=tuple(data["spawn_ring"]),
        dest_ring=tuple(data["dest_ring"]),
        v_ref_range=tuple(data["v_ref_range"]),
        seed=int(seed_override if seed_override is not None else data["seed"]),
        map_path=str(data["map"]),
        name=str(data.get("name", path.stem)),
        center=tuple(data.get("center", (0.0, 0.0))),
        r_tele=float(data.get("r_tele", 50.0)),
        goal_tol=float(data.get("goal_tol", 3.0)),
        step_budget=int(data.get("step_budget", 3000)),
        solver=solver,
        geometry=geometry,
    )
    map_path = Path(cfg.map_path)
    if not map_path.is_absolute():
        map_path = path.parent / map_path
    return cfg, load_road_graph(map_path)


def cmd_run(args) -> int:
    cfg, graph = load_scenario(args.scenario, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fleet = orchestrator.generate_scenario(cfg, graph)
    code = 0
    try:
        log = orchestrator.run_episode(fleet, cfg, solver=args.solver, threads=args.threads)
    except (CollisionDetected, StepBudgetExceeded) as exc:
        print(f"episode aborted: {exc}", file=sys.stderr)
        log = exc.run_log
        code = 2
    orchestrator.write_states_csv(log, out / "states.csv")
    orchestrator.write_metrics_json(log, out / "metrics.json")
    orchestrator.write_partition_json(log, out / "partition.json")
    solve_max = max((max(t) for t in log.epoch_solve_times if t), default=0.0)
    print(
        f"steps={log.steps_executed} "
        f"min_distance={log.min_distance:.3f} "
        f"mean_speed_error={orchestrator.mean_speed_error(log):.3f} "
        f"max_epoch_solve_time={solve_max:.3f}"
    )
    return code


def cmd_partition(args) -> int:
    cfg, graph = load_scenario(args.scenario, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fleet = orchestrator.generate_scenario(cfg, graph)
    snap = FleetSnapshot.from_lists(
        ids=[p.vid for p in fleet],
        xy=[[p.spawn.x, p.spawn.y] for p in fleet],
        heading=[p.spawn.theta for p in fleet],
        v_ref=[p.v_ref for p in fleet],
        r_tele=[cfg.r_tele for _ in fleet],
    )
    subs = build_partition(snap, cfg.solver.partition_horizon)
    payload = {
        "epochs": [
            {
                "epoch": 0,
                "subgraphs": [
                    {
                        "members": list(s.members),
                        "edges": [list(e) for e in s.edges],
                        "radio_connected": s.radio_connected,
                    }
                    for s in subs
                ],
            }
        ]
    }
    with open(out / "partition.json", "w") as fh:
        json.dump(payload, fh, indent=1)
    sizes = sorted((len(s) for s in subs), reverse=True)
    print(f"subgraphs={len(subs)} sizes={sizes}")
    return 0


def cmd_bench_scaling(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    result = verify.bench_scaling(sizes=sizes, k_max=args.k_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench_scaling.json", "w") as fh:
        json.dump(result, fh, indent=1)
    for variant in ("improved", "naive"):
        r = result[variant]
        print(
            f"{variant}: slope={r['slope']:.3f} "
            f"work={['%.3g' % w for w in r['work_per_sweep']]} "
            f"wall={['%.3g' % w for w in r['wall_time']]}"
        )
    return 0


def cmd_verify(args) -> int:
    results = verify.default_checks()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavplan", description="Cooperative fleet motion planning"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write logs/metrics")
    run.add_argument("--scenario", required=True, help="scenario TOML file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--solver", choices=("improved", "naive"), default="improved")
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(fn=cmd_run)

    part = sub.add_parser("partition", help="dump the spawn-time fleet partition")
    part.add_argument("--scenario", required=True)
    part.add_argument("--out", required=True)
    part.add_argument("--seed", type=int, default=None)
    part.set_defaults(fn=cmd_partition)

    bench = sub.add_parser("bench-scaling", help="dual-update work vs fleet size")
    bench.add_argument("--out", required=True)
    bench.add_argument("--sizes", default="4,8,16,32")
    bench.add_argument("--k-max", type=int, default=10)
    bench.set_defaults(fn=cmd_bench_scaling)

    ver = sub.add_parser("verify", help="run the oracle equivalence suites")
    ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CavPlanError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
