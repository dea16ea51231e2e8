"""Rate-regularized attention allocation for LQG landmark tracking.

A mobile robot follows a reference trajectory using bearing measurements of
known landmarks through a capacity-limited channel.  This package allocates
per-landmark data rates by trading predicted control cost against the
information rate of the measurement stream, solved receding-horizon with a
convex-concave outer loop, a barrier interior-point subsolver, and an
optional per-step splitting (ADMM) decomposition whose cost is linear in
the horizon.
"""

from .allocator import (
    AllocationSolution,
    CcpConfig,
    WindowProblem,
    ccp_solve,
    directed_info,
    feasible_init,
    objective_value,
    reconstruct_consistent,
)
from .admm import AdmmConfig, AdmmState, run as admm_run
from .baselines import (
    Diverges,
    GreedyBudget,
    ScalarSystem,
    greedy_select,
    scalar_regime_thresholds,
    scalar_riccati_fixed_point,
    scalar_stationary_solution,
)
from .filtering import AttentionVector, Belief, predict, update
from .harness import (
    ConfigError,
    RunLog,
    ScenarioConfig,
    SummaryStats,
    export,
    monte_carlo,
    paper_scenario_config,
    run_mission,
)
from .lqg import CostWeights, RiccatiTape, backward_riccati, control, expected_cost
from .plant import (
    ControlInput,
    Landmark,
    LandmarkCollision,
    LtvWindow,
    ReferenceTrajectory,
    RobotState,
    linearize,
    measure,
    reference_circle,
    step_dynamics,
    wrap_angle,
)
from .subsolver import (
    BarrierConfig,
    ConvexSubproblem,
    Infeasible,
    MaxIterations,
    SolverReport,
    StepBlock,
    SubsolverFailure,
    gradient_check,
    solve_zstep,
)
from .symmetric import (
    NotPositiveDefinite,
    SpdMatrix,
    SymMatrix,
    cholesky,
    inverse,
    logdet,
    min_eigenvalue,
    smat,
    svec,
)

__version__ = "0.1.0"
