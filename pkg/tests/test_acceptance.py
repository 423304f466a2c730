"""End-to-end acceptance battery.

One test per shipped criterion; each prints a PASS/FAIL line (run with -s to
see them all) and asserts at the stated tolerance.  The two episode fixtures
are session-scoped, so the whole battery costs two full simulations plus the
oracle sweeps.
"""

import time

import numpy as np
import pytest

from cavplan import verify
from cavplan.orchestrator import run_episode, write_states_csv


def report(num: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, detail


def test_criterion_1_box_dual_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(40)
    worst = 0.0
    for _ in range(20):
        n = int(rng.choice([2, 3, 4]))
        T = int(rng.choice([2, 5]))
        imp, nai, r1w, nb = verify.run_equivalence_pair(n, T, 30, rng)
        worst = max(worst, verify.box_block_gap(imp, nai, r1w, nb, n))
    elapsed = time.perf_counter() - t0
    report(
        1,
        worst <= 1e-12 and elapsed < 10.0,
        f"20 instances, 30 sweeps: max iterate gap {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_lqr_kkt_equivalence():
    res = verify.check_lqr_kkt(instances=50, seed=41)
    report(2, res.passed, res.detail)


def test_criterion_3_jacobian_correctness():
    dyn = verify.check_dynamics_jacobians(samples=1000, seed=42)
    col = verify.check_collision_jacobians(samples=1000, seed=43)
    report(3, dyn.passed and col.passed, f"dynamics {dyn.detail}; collision {col.detail}")


def test_criterion_4_moreau_identity():
    res = verify.check_moreau(n_vectors=100_000, seed=44)
    report(4, res.passed, res.detail + " over 1e5 vectors")


def test_criterion_5_eight_vehicle_safety(episode_8):
    cfg, fleet, log, wall = episode_8
    ok = (
        log.min_distance > 2.5
        and len(log.arrived_step) == len(fleet)
        and wall < 300.0
    )
    report(
        5,
        ok,
        f"min pairwise distance {log.min_distance:.2f} m over {log.steps_executed} "
        f"steps, {len(log.arrived_step)}/{len(fleet)} arrived, {wall:.0f}s",
    )


def test_criterion_6_dual_work_scaling():
    res = verify.bench_scaling(sizes=(4, 8, 16, 32), k_max=4)
    imp, nai = res["improved"], res["naive"]
    trend = (
        imp["wall_time"][-1] > imp["wall_time"][0]
        and nai["wall_time"][-1] > nai["wall_time"][0]
    )
    ok = 0.9 <= imp["slope"] <= 1.1 and nai["slope"] > 1.5 and trend
    report(
        6,
        ok,
        f"bounded-degree slope {imp['slope']:.3f} in [0.9, 1.1]; "
        f"dense baseline slope {nai['slope']:.2f} > 1.5; wall times rise "
        f"{imp['wall_time'][0]:.3f}->{imp['wall_time'][-1]:.3f}s",
    )


def test_criterion_7_partition_safety():
    res = verify.check_partition_oracle(snapshots=100, m=80, seed=45)
    report(7, res.passed, res.detail + " (80 vehicles each)")


def test_criterion_8_subgraph_sizes(episode_80):
    cfg, fleet, log, wall = episode_80
    sizes = [s for epoch in log.epoch_subgraph_sizes for s in epoch]
    largest = max(sizes)
    median = float(np.median(sizes))
    ok = largest <= 16 and median <= 10
    soft = "within" if largest <= 10 else "above"
    report(
        8,
        ok,
        f"80-vehicle episode: max subgraph {largest} (<=16), median {median:.1f} "
        f"(<=10); {soft} the soft <=10 target; min distance {log.min_distance:.2f} m, "
        f"{len(log.arrived_step)}/80 arrived, {wall:.0f}s",
    )


def test_criterion_9_velocity_tracking(episode_8):
    _, _, log, _ = episode_8
    steady = [r.state.v for r in log.rows if r.step >= 30]
    mean_v = float(np.mean(steady))
    ok = abs(mean_v - 10.0) <= 2.0
    report(9, ok, f"steady-portion mean speed {mean_v:.2f} m/s vs target 10 (+-20%)")


def test_criterion_10_determinism(episode_8, tmp_path):
    cfg, fleet, log, _ = episode_8
    rerun = run_episode(fleet, cfg)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_states_csv(log, a)
    write_states_csv(rerun, b)
    ok = a.read_bytes() == b.read_bytes()
    report(10, ok, f"two identical-seed runs produced byte-identical states.csv ({a.stat().st_size} bytes)")
