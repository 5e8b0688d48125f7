"""Linear port-Hamiltonian systems on networks of intervals.

Channel-wise congruence to a reference transport operator, classification
of boundary conditions, an upwind discretization and implicit Euler /
DAE time stepping with boundary control.
"""
from .boundary import (AccretivityCertificate, ContractionForm, MatrixForm, accretivity_sampler,
                       check_m_form, check_wb_maccretive, contraction_to_wb, factor_wb)
from .discretize import assemble_operator, build_grid, discrete_adjoint, resolvent_norm
from .errors import (BoundaryConditionError, CompatibilityError, DimensionError, InvariantViolation,
                     NotCertifiedError, PhNetError, SingularCouplingError, SolverError)
from .evolve import (ControlSignal, EvoProblem, Trajectory, continuity_modulus, prepare, simulate,
                     simulate_physical, solve_boundary_control, weighted_norm)
from .network import HamiltonianField, Interval, NetworkSpec
from .problemfile import load_problem, parse_problem
from .transform import apply_V, boundary_matrix_c, build_congruence

__version__ = "0.1.0"
