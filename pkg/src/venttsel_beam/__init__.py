"""Boundary null control of a three-field laminated Timoshenko beam with
dynamic (Venttsel) end conditions.

The package discretizes the beam with piecewise-linear finite elements whose
boundary point masses carry the dynamic end conditions, integrates the
semi-discrete flow with the implicit midpoint rule, and computes HUM boundary
controls through a matrix-free controllability Gramian.
"""

from .model import (
    HansenSpiesParams,
    ParameterError,
    PhysicalParams,
    from_hansen_spies,
    inverse_transform_state,
    to_hansen_spies,
    transform_state,
)
from .assembly import (
    DiscreteSystem,
    Grid,
    GridError,
    State,
    apply_A,
    assemble,
    energy,
    energy_inner,
    energy_norm,
    fractional_norm,
    solve_static,
)
from .evolution import (
    ControlTriple,
    TimeGrid,
    TraceSignal,
    Trajectory,
    solve_adjoint,
    solve_controlled,
    solve_damped,
    solve_homogeneous,
    step_midpoint,
)
from .filters import ModalFilter
from .hum import (
    GramianOperator,
    HumSolution,
    apply_gramian,
    minimize_J,
    null_control_pipeline,
    verify_duality_identity,
)
from .observability import (
    ObservabilityReport,
    estimate_observability_constant,
    multiplier_identity_residual,
    position_trace_functional,
    velocity_trace_functional,
)

__version__ = "0.1.0"

__all__ = [
    "ControlTriple",
    "DiscreteSystem",
    "GramianOperator",
    "Grid",
    "GridError",
    "HansenSpiesParams",
    "HumSolution",
    "ModalFilter",
    "ObservabilityReport",
    "ParameterError",
    "PhysicalParams",
    "State",
    "TimeGrid",
    "TraceSignal",
    "Trajectory",
    "apply_A",
    "apply_gramian",
    "assemble",
    "energy",
    "energy_inner",
    "energy_norm",
    "estimate_observability_constant",
    "fractional_norm",
    "from_hansen_spies",
    "inverse_transform_state",
    "minimize_J",
    "multiplier_identity_residual",
    "null_control_pipeline",
    "position_trace_functional",
    "solve_adjoint",
    "solve_controlled",
    "solve_damped",
    "solve_homogeneous",
    "solve_static",
    "step_midpoint",
    "to_hansen_spies",
    "transform_state",
    "velocity_trace_functional",
    "verify_duality_identity",
]
