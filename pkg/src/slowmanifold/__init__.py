"""Slow invariant manifolds of two-timescale ODE systems.

Computation routes: invariance-equation asymptotics (quasi-steady state
and the order-by-order expansion in the timescale gap), a trajectory
variational principle with a conserved-Hamiltonian diagnostic, and an
extended-phase-space zero-curvature criterion -- plus a harness that
quantifies how much each route depends on the choice of coordinates.
"""

from .errors import (
    AdjointShootingError,
    BracketError,
    DomainError,
    GridError,
    NonGraphError,
    NonlinearSolverError,
    SingularityError,
    SlowManifoldError,
    StiffnessError,
)
from .models import (
    ModelSpec,
    davis_skodje,
    eval_field,
    eval_jacobian,
    get_model,
    linear_two_scale,
    model_names,
    sim_candidates,
)
from .manifold import GraphManifold, derivative, uniform_grid
from .integrate import Trajectory, integrate
from .asymptotics import (
    DefectReport,
    candidate_audit,
    candidate_manifold,
    eps_expansion,
    first_order_correction,
    invariance_defect,
    qssa,
)
from .geometry import (
    AdvectedFamily,
    CurvatureReport,
    advect_family,
    curvature_field,
    select_invariant_root,
    solve_curvature_criterion,
    time_derivatives,
)
from .variational import (
    HamiltonianTrace,
    VariationalSpec,
    default_spec,
    hamiltonian_trace,
    minimize_fast_ic,
    objective,
)
from .covariance import (
    CoordinateChange,
    GapReport,
    compute_manifold,
    covariance_gap,
    identity_change,
    map_manifold,
    mapped_defect,
    rotation_change,
    swap_change,
    transform_model,
)

__version__ = "0.1.0"
