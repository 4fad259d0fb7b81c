"""DG finite elements for a membrane spanning a length-constrained elastic boundary."""

from .mesh import Mesh, build_mesh, generate_disc_mesh, read_msh, write_msh
from .spaces import DofLayout, build_dofmaps
from .state import State
from .catalog import ElasticityField, interpolate_guess, rescale_to_perimeter
from .forms import augmented_energy, jacobian, residual
from .solver import NewtonReport, SolverConfig, newton_solve
from .verify import ShapeReport, constraint_report, fd_gradient_check, traction_profile

__all__ = [
    "Mesh",
    "build_mesh",
    "generate_disc_mesh",
    "read_msh",
    "write_msh",
    "DofLayout",
    "build_dofmaps",
    "State",
    "ElasticityField",
    "interpolate_guess",
    "rescale_to_perimeter",
    "augmented_energy",
    "residual",
    "jacobian",
    "NewtonReport",
    "SolverConfig",
    "newton_solve",
    "ShapeReport",
    "constraint_report",
    "fd_gradient_check",
    "traction_profile",
]
