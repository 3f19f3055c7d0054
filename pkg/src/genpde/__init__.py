"""General Explicit Networks: learnable analytic bases + a small synthesis MLP,
trained with physics-informed losses, with a plain-MLP PINN baseline and
reference solvers for the heat, wave and viscous Burgers benchmarks."""

from .autodiff import Jet, ParamVector, Tape, check_gradient, grad, jet_seed, value_and_grad
from .basis import BasisFamily, BasisSet, basis_values, eval_basis, export_basis, import_basis, init_basis
from .errors import CheckpointError, ConfigurationError, NumericalError
from .model import ExactModel, GenModel, PinnModel, basis_influence, flatten, forward, make_gen, make_pinn, predict, unflatten
from .pde import (Box, PdeProblem, SolutionGrid, burgers_problem, cole_hopf_reference, fd_reference,
                  get_problem, heat_problem, wave_problem)
from .training import (AdamState, Collocation, TrainConfig, TrainReport, TrainingAborted, adam_step,
                       compute_loss, evaluate, extrapolation_report, sample_collocation, train)

__version__ = "0.1.0"
