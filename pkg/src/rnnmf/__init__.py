"""Mean-field theory of signal propagation in gated recurrent networks.

The library computes forward moment maps (state mean, second moment,
cross-replica correlation), their fixed points, the input-output Jacobian's
squared-singular-value moments, and critical initializations tuned for
dynamical isometry, for five recurrent cells: vanillaRNN, minimalRNN, GRU,
peepholeLSTM and LSTM. A finite-width simulator with untied weights serves
as the empirical counterpart throughout.
"""

from .core import (
    ARCHITECTURES,
    ArchitectureSpec,
    GateParams,
    Hyperparameters,
    InputStats,
    InvalidTheta,
    MomentState,
    NegativeVariance,
    SimulationConfig,
    UnknownArchitecture,
    ZERO_STATE,
    get_architecture,
    load_theta,
    dump_theta,
    theta_from_json_dict,
    theta_to_json_dict,
    validate_theta,
)
from .quadrature import (
    DEFAULT_ORDER,
    GaussianPairSpec,
    NonFiniteIntegrand,
    expect1,
    expect2,
    sample_pair,
)
from .moment_maps import (
    DegenerateCorrelation,
    MissingCellEnsemble,
    PreActivationStats,
    moment_trajectory,
    preactivation_stats,
    step_correlation,
    step_moments,
)
from .lstm_cell_sampler import (
    CellStateEnsemble,
    advance_cell,
    correlated_cell_pairs,
    sample_cell_distribution,
)
from .jacobian import (
    CRITICAL_TOL,
    ContributionVector,
    IsometryGap,
    JacobianMoments,
    contribution_vector,
    isometry_gap,
    jacobian_report_dict,
    lstm_chi_frame,
    moments,
)
from .fixed_point import (
    DerivativeUnstable,
    FixedPointReport,
    MomentsSolution,
    NoConvergence,
    chi_at,
    solve_correlation,
    solve_moments,
)
from .criticality import (
    PRESET_NAMES,
    SIGMA2_FLOOR,
    SearchFailed,
    SearchReport,
    SWEEP_COLUMNS,
    UnknownPreset,
    direction_from_json_dict,
    preset_default_arch,
    preset_init,
    search_critical,
    sweep_phase_diagram,
)
from .simulator import (
    JacobianFrame,
    NonFiniteState,
    SpectrumReport,
    TrajectoryPoint,
    assemble_jacobian,
    build_jacobian,
    jacobian_frame,
    simulate_cell_distribution,
    simulate_pair,
)

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "ArchitectureSpec",
    "CRITICAL_TOL",
    "CellStateEnsemble",
    "ContributionVector",
    "DEFAULT_ORDER",
    "DegenerateCorrelation",
    "DerivativeUnstable",
    "FixedPointReport",
    "GateParams",
    "GaussianPairSpec",
    "Hyperparameters",
    "InputStats",
    "InvalidTheta",
    "IsometryGap",
    "JacobianFrame",
    "JacobianMoments",
    "MissingCellEnsemble",
    "MomentState",
    "MomentsSolution",
    "NegativeVariance",
    "NoConvergence",
    "NonFiniteIntegrand",
    "NonFiniteState",
    "PRESET_NAMES",
    "PreActivationStats",
    "SIGMA2_FLOOR",
    "SWEEP_COLUMNS",
    "SearchFailed",
    "SearchReport",
    "SimulationConfig",
    "SpectrumReport",
    "TrajectoryPoint",
    "UnknownArchitecture",
    "UnknownPreset",
    "ZERO_STATE",
    "advance_cell",
    "assemble_jacobian",
    "build_jacobian",
    "chi_at",
    "contribution_vector",
    "correlated_cell_pairs",
    "direction_from_json_dict",
    "dump_theta",
    "expect1",
    "expect2",
    "get_architecture",
    "isometry_gap",
    "jacobian_frame",
    "jacobian_report_dict",
    "load_theta",
    "lstm_chi_frame",
    "moment_trajectory",
    "moments",
    "preactivation_stats",
    "preset_default_arch",
    "preset_init",
    "sample_cell_distribution",
    "sample_pair",
    "search_critical",
    "simulate_cell_distribution",
    "simulate_pair",
    "solve_correlation",
    "solve_moments",
    "step_correlation",
    "step_moments",
    "sweep_phase_diagram",
    "theta_from_json_dict",
    "theta_to_json_dict",
    "validate_theta",
]
