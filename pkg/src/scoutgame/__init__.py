"""Two-stage scouting/defense games: equilibria, sensitivities, experiments.

Stage 1 allocates scouting effort r over m directions; a detection certifies
the world, otherwise play proceeds under the Bayes posterior. Stage 2 is a
two-player game solved per signal. The package computes the stage-2
equilibria, differentiates them with respect to r through the implicit
function theorem, and optimizes r by projected gradient descent.
"""

from .errors import (
    ConfigError,
    DegenerateSignal,
    GradientUnavailable,
    InvalidPreference,
    MissingPolicy,
    NoConvergence,
    RelativeInteriorRequired,
    ScoutGameError,
    SingularSystem,
    UnsupportedPair,
)
from .game import (
    CostFunction,
    GameSpec,
    PosteriorZero,
    QuadraticCost,
    SignalStructure,
    joint_probabilities,
    posterior_given_zero,
    stage1_cost,
    stage1_terms,
    world_of_signal,
)
from .optimizer import OptimizerConfig, OptimizerTrace, solve_two_stage
from .sensitivity import (
    JacobianParts,
    SensitivityReport,
    assemble_jacobian,
    check_conditions,
    fd_directional_k,
    fd_jacobian,
    posterior_weight_jacobian,
    sensitivity_report,
    solve_sensitivity,
    tangent_directions,
    total_gradient,
)
from .simplex import barycentric_lattice, project_simplex
from .solver import (
    SolverConfig,
    Stage2Solution,
    Stage2Solver,
    SubgameResult,
    nash_verify,
    solve_imperfect_info,
    solve_perfect_info,
    solve_stage2,
    stationarity_residual,
)
from .sweep import SweepGrid, SweepPoint, gradcheck, perturbation_study, policy_map, sweep
from .towerdefense import (
    DEFAULT_PREFERENCES,
    DEFAULT_SHARPNESS,
    TowerDefenseParams,
    attacker_cost,
    build_game,
    cost_derivatives,
    default_params,
    zeta,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CostFunction",
    "DEFAULT_PREFERENCES",
    "DEFAULT_SHARPNESS",
    "DegenerateSignal",
    "GameSpec",
    "GradientUnavailable",
    "InvalidPreference",
    "JacobianParts",
    "MissingPolicy",
    "NoConvergence",
    "OptimizerConfig",
    "OptimizerTrace",
    "PosteriorZero",
    "QuadraticCost",
    "RelativeInteriorRequired",
    "ScoutGameError",
    "SensitivityReport",
    "SignalStructure",
    "SingularSystem",
    "SolverConfig",
    "Stage2Solution",
    "Stage2Solver",
    "SubgameResult",
    "SweepGrid",
    "SweepPoint",
    "TowerDefenseParams",
    "UnsupportedPair",
    "assemble_jacobian",
    "attacker_cost",
    "barycentric_lattice",
    "build_game",
    "check_conditions",
    "cost_derivatives",
    "default_params",
    "fd_directional_k",
    "fd_jacobian",
    "gradcheck",
    "joint_probabilities",
    "nash_verify",
    "perturbation_study",
    "policy_map",
    "posterior_given_zero",
    "posterior_weight_jacobian",
    "project_simplex",
    "sensitivity_report",
    "solve_imperfect_info",
    "solve_perfect_info",
    "solve_sensitivity",
    "solve_stage2",
    "solve_two_stage",
    "stage1_cost",
    "stage1_terms",
    "stationarity_residual",
    "sweep",
    "tangent_directions",
    "total_gradient",
    "world_of_signal",
    "zeta",
]
