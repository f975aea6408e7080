"""Exponential-stability certification and simulation for delayed neural-network dynamics."""

__version__ = "0.1.0"

from .basis import (
    DegenerateBasisError,
    OrthogonalCoefficients,
    WeightedBasis,
    compute_coefficients,
    compute_moments,
    limit_coefficients,
    limit_weights,
)
from .dde import Trajectory, estimate_decay_rate, find_equilibrium, simulate
from .funcspace import ScalarFunc, TestFunction, random_scalar_func, random_test_function
from .inequalities import (
    SUITE_KINDS,
    SuiteCase,
    equality_case,
    run_inequality_suite,
    verify_derivative_inequality,
    verify_rci,
    verify_weighted_inequality,
    verify_wrci,
)
from .lkf import assemble_augmented_state, dominance_gap, evaluate_lkf
from .lmi import (
    CompiledConstraint,
    LmiLayout,
    StabilityProblem,
    assemble_stability_problem,
    count_variables,
)
from .sdp import (
    FeasibilityResult,
    PlantedProblem,
    WitnessReport,
    planted_problem,
    solve_feasibility,
    verify_witness,
)
from .search import (
    DEFAULT_ATTENUATION_ANCHORS,
    DEFAULT_XI_FRACTIONS,
    EnvelopeConstants,
    ProbeRecord,
    SearchOutcome,
    StabilityCertificate,
    check_stability,
    envelope_constants,
    max_decay_rate,
    max_delay_bound,
)
from .systems import (
    Activation,
    DelayedNNSystem,
    DelaySignal,
    SystemFormatError,
    bundled_system,
    load_system,
)

__all__ = [
    "__version__",
    "DegenerateBasisError",
    "OrthogonalCoefficients",
    "WeightedBasis",
    "compute_coefficients",
    "compute_moments",
    "limit_coefficients",
    "limit_weights",
    "Trajectory",
    "estimate_decay_rate",
    "find_equilibrium",
    "simulate",
    "ScalarFunc",
    "TestFunction",
    "random_scalar_func",
    "random_test_function",
    "SUITE_KINDS",
    "SuiteCase",
    "equality_case",
    "run_inequality_suite",
    "verify_derivative_inequality",
    "verify_rci",
    "verify_weighted_inequality",
    "verify_wrci",
    "assemble_augmented_state",
    "dominance_gap",
    "evaluate_lkf",
    "CompiledConstraint",
    "LmiLayout",
    "StabilityProblem",
    "assemble_stability_problem",
    "count_variables",
    "FeasibilityResult",
    "PlantedProblem",
    "WitnessReport",
    "planted_problem",
    "solve_feasibility",
    "verify_witness",
    "DEFAULT_ATTENUATION_ANCHORS",
    "DEFAULT_XI_FRACTIONS",
    "EnvelopeConstants",
    "ProbeRecord",
    "SearchOutcome",
    "StabilityCertificate",
    "check_stability",
    "envelope_constants",
    "max_decay_rate",
    "max_delay_bound",
    "Activation",
    "DelayedNNSystem",
    "DelaySignal",
    "SystemFormatError",
    "bundled_system",
    "load_system",
]
