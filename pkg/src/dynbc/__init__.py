"""P1 finite elements for parabolic problems with dynamical boundary conditions.

The state couples bulk values on the domain with their traces on the
dynamical boundary part gamma and on an interior interface sigma. Modules:
``mesh``, ``state_space``, ``assembly``, ``operator``, ``linear_solver``,
``kirchhoff``, ``balance`` and the command line in ``cli``.
"""
from .assembly import CoefficientField, make_coefficients
from .balance import ControlVolume, control_volume, global_balance_residual, subdomain_flux_balance
from .kirchhoff import Nonlinearity, QuasilinearControls, ReactionSpec, solve_quasilinear
from .linear_solver import Loads, TimeGrid, WeightedNormSpec, graded_grid, solve_linear, uniform_grid
from .mesh import Mesh, MeshError, generate_rect_mesh, generate_slit_disk, load_mesh, save_mesh, validate
from .operator import DiscreteOperator, SolverError, build_operator
from .state_space import DofMap, build_dofmap, lp_norm

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "make_coefficients",
    "ControlVolume",
    "control_volume",
    "global_balance_residual",
    "subdomain_flux_balance",
    "Nonlinearity",
    "QuasilinearControls",
    "ReactionSpec",
    "solve_quasilinear",
    "Loads",
    "TimeGrid",
    "WeightedNormSpec",
    "graded_grid",
    "solve_linear",
    "uniform_grid",
    "Mesh",
    "MeshError",
    "generate_rect_mesh",
    "generate_slit_disk",
    "load_mesh",
    "save_mesh",
    "validate",
    "DiscreteOperator",
    "SolverError",
    "build_operator",
    "DofMap",
    "build_dofmap",
    "lp_norm",
]
