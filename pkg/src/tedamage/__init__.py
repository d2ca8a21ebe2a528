"""Finite element solver and analysis tools for a coupled thermo-elastic-damage model."""

from .errors import InvalidArgument, InvalidMesh, SolverBreakdown, StepFailure
from .tensor import ElasticModuli, SymTensor2
from .mesh import Mesh, build_notched_square, build_unit_square, refine_uniform, shape_report
from .assembly import BCSpec, BoundaryCondition, ConductivityModel, ModelParams
from .nonlinear import NewtonConfig, newton_solve
from .stepper import ProblemData, SolverSettings, StateHistory, TimeGrid, initialize, run, step

__version__ = "0.1.0"
