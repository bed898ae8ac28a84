"""Structure-preserving variational integrator and conservation-law
diagnostics for the shallow-water particle-label field on a circle."""

from .errors import (
    BadInitialData,
    ChmsError,
    ConfigError,
    EmptyRegion,
    MaxItersExceeded,
    NonMonotone,
    NotOnShell,
    OutOfRange,
    SingularJacobian,
)
from .grid import GridSpec, Rect, Region, classify_region, rectangles_touching
from .lagrangian import GradL, HessL, Stencil, continuous_density, eval_L, grad_L, hess_L
from .del_solver import (
    EvolveResult,
    Section,
    SolverConfig,
    StepFailure,
    StepStats,
    action_sum,
    del_residual,
    del_residual_expanded,
    evolve,
    initialize,
    step,
)
from .geometry_checks import (
    SymmetryGenerator,
    TangentSection,
    mff_boundary_sum,
    momentum_map_l,
    noether_boundary_sum,
    omega_l,
    solve_first_variation,
    theta_l,
    total_momentum,
)
from .bridges import (
    B0,
    B1,
    Jet3Sample,
    PhasePoint,
    PresymplecticPair,
    conservation_residual,
    continuous_el_residual,
    eulerian_velocity,
    hamilton_residuals,
    hamiltonian,
    legendre,
    omega_pair,
    phase_field,
)

__version__ = "0.1.0"
