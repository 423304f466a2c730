"""Cooperative motion planning for connected-vehicle fleets."""

from .admm import (
    DualState,
    LqrSubproblem,
    SolveResult,
    admm_solve_naive,
    admm_solve_subgraph,
    project_box_cone,
    solve_lqr,
)
from .assembly import AssembledOCP, BoundsVec, SolverConfig, assemble_subgraph
from .errors import (
    BadFilterParams,
    CavPlanError,
    CollisionDetected,
    DegeneratePair,
    DomainError,
    InfeasibleStart,
    NoRoute,
    NumericalError,
    ScenarioInfeasible,
    SingularKKT,
    StepBudgetExceeded,
)
from .geometry import (
    CollisionJacobians,
    PairTransform,
    circle_centers,
    collision_jacobians,
    linearized_safety,
    pair_transform,
)
from .orchestrator import (
    RunLog,
    ScenarioConfig,
    VehiclePlan,
    generate_scenario,
    run_episode,
)
from .partition import FleetSnapshot, Subgraph, build_partition, safe_distance
from .roadmap import (
    GuidanceTrajectory,
    RoadGraph,
    WaypointIndex,
    astar_route,
    load_road_graph,
    make_grid_map,
    nearest_waypoint,
    reference_window,
    smooth_path,
)
from .vehicle import (
    ControlInput,
    LinearizedDynamics,
    VehicleGeometry,
    VehicleLimits,
    VehicleState,
    linearize_dynamics,
    step_dynamics,
)

__version__ = "0.1.0"
