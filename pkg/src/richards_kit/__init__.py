"""Serial solver kit for variably saturated flow in the mixed form.

Van Genuchten constitutive laws, cell-centered finite differences with
selectable interface averaging, analytic sparse Jacobians, a modified
inexact Newton driver with restarted right-preconditioned GMRES, a
preconditioner suite (ILU(0), block-Jacobi, additive Schwarz, smoothed
aggregation multigrid), and spectral diagnostics comparing Jacobian
eigenvalues against their predicted distribution symbol.
"""

__version__ = "0.1.0"

from .constitutive import (
    HAVERKAMP_PARAMS,
    VanGenuchtenParams,
    conductivity,
    d_conductivity,
    d_saturation,
    saturation,
)
from .grid import BoundarySpec, ProblemGrid, boundary_value, initial_field
from .jacobian import (
    JacobianMatrix,
    assemble,
    assemble_1d,
    assemble_3d,
    diffusion_preconditioner_matrix,
    fd_jacobian,
    gravity_matrix,
)
from .newton import (
    NewtonConfig,
    NewtonConvergenceError,
    NewtonStats,
    armijo_goldstein,
    run_simulation,
    should_rebuild_jacobian,
    solve_timestep,
)
from .precond import (
    AdditiveSchwarz,
    AggregationMap,
    AmgHierarchy,
    Ilu0,
    PrecondConfig,
    SubdomainPartition,
    additive_schwarz,
    block_jacobi,
    build_amg,
    make_preconditioner,
    matching_aggregate,
    update_smoothers,
    v_cycle_apply,
    vmb_aggregate,
)
from .residual import AverageKind, interface_k, residual_1d, residual_3d
from .sparse_linalg import SolveReport, gmres, pcg, spmv, triple_product
from .spectral import (
    EigDistribution,
    SymbolGrid,
    as_equivalence_experiment,
    distribution_distance,
    eigenvalues_tridiagonal,
    sample_symbol_1d,
    sample_symbol_3d,
    zero_distribution_check,
)

__all__ = [
    "AdditiveSchwarz",
    "AggregationMap",
    "AmgHierarchy",
    "AverageKind",
    "BoundarySpec",
    "EigDistribution",
    "HAVERKAMP_PARAMS",
    "Ilu0",
    "JacobianMatrix",
    "NewtonConfig",
    "NewtonConvergenceError",
    "NewtonStats",
    "PrecondConfig",
    "ProblemGrid",
    "SolveReport",
    "SubdomainPartition",
    "SymbolGrid",
    "VanGenuchtenParams",
    "additive_schwarz",
    "armijo_goldstein",
    "as_equivalence_experiment",
    "assemble",
    "assemble_1d",
    "assemble_3d",
    "block_jacobi",
    "boundary_value",
    "build_amg",
    "conductivity",
    "d_conductivity",
    "d_saturation",
    "diffusion_preconditioner_matrix",
    "distribution_distance",
    "eigenvalues_tridiagonal",
    "fd_jacobian",
    "gmres",
    "gravity_matrix",
    "initial_field",
    "interface_k",
    "make_preconditioner",
    "matching_aggregate",
    "pcg",
    "residual_1d",
    "residual_3d",
    "run_simulation",
    "sample_symbol_1d",
    "sample_symbol_3d",
    "saturation",
    "should_rebuild_jacobian",
    "solve_timestep",
    "spmv",
    "triple_product",
    "update_smoothers",
    "v_cycle_apply",
    "vmb_aggregate",
    "zero_distribution_check",
]
