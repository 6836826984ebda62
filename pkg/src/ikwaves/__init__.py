"""Isobe-Kakinuma water-wave model in canonical Hamiltonian form.

Periodic pseudospectral discretization of the model's depth-integrated
operators, the constrained reconstruction of the expansion coefficients from
canonical data, Hamilton's equations with RK4 time stepping, and a
terrain-following reference solver for the full water-wave Hamiltonian used
to measure the model's shallow-water consistency order.
"""

from .energy import (
    CanonicalState,
    GradientCheckReport,
    grad_eta,
    grad_phi,
    gradient_check,
    hamiltonian,
    total_energy,
)
from .errors import ConvergenceError, DepthFloorError, GridMismatchError, NonFiniteFieldError
from .grid import Field, Grid, deriv, inner, integrate, make_grid, norm
from .model import (
    Geometry,
    PotentialCoeffs,
    VerticalExpansion,
    apply_block,
    apply_constraints,
    apply_operator,
    exponents,
    surface_velocity,
    surface_vertical_velocity,
    surface_weights,
)
from .reference import (
    SweepConfig,
    SweepResult,
    consistency_sweep,
    dtn_flat,
    hamiltonian_ww,
    solve_laplace,
)
from .solver import SolveReport, reconstruct, reconstruct_derivative, solve_coefficients
from .stepper import (
    SimulationConfig,
    Trajectory,
    canonical_rhs,
    model_residual,
    rk4_step,
    simulate,
)

__version__ = "0.1.0"
