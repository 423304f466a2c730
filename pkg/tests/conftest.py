import time

import numpy as np
import pytest

from cavplan.orchestrator import ScenarioConfig, generate_scenario, run_episode
from cavplan.roadmap import make_grid_map


@pytest.fixture(scope="session")
def small_map():
    return make_grid_map(half_extent=180, spacing=60, step=1.0)


@pytest.fixture(scope="session")
def large_map():
    return make_grid_map(half_extent=520, spacing=80, step=1.0)


@pytest.fixture(scope="session")
def scenario_8(small_map):
    """The 8-vehicle benchmark scenario: tight spawn ring, shared target speed."""
    cfg = ScenarioConfig(
        cav_count=8,
        spawn_ring=(7.5, 30.0),
        dest_ring=(100.0, 150.0),
        v_ref_range=(10.0, 10.0),
        seed=7,
    )
    return cfg, generate_scenario(cfg, small_map)


@pytest.fixture(scope="session")
def episode_8(scenario_8):
    cfg, fleet = scenario_8
    t0 = time.perf_counter()
    log = run_episode(fleet, cfg)
    return cfg, fleet, log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def episode_80(large_map):
    """The 80-vehicle large-scale episode (heavyweight; session-cached)."""
    cfg = ScenarioConfig(
        cav_count=80,
        spawn_ring=(10.0, 340.0),
        dest_ring=(140.0, 170.0),
        v_ref_range=(5.0, 20.0),
        seed=11,
    )
    fleet = generate_scenario(cfg, large_map)
    t0 = time.perf_counter()
    log = run_episode(fleet, cfg, threads=4)
    return cfg, fleet, log, time.perf_counter() - t0


def rng_of(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
