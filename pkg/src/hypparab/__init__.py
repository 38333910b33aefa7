"""Nonlocal hyperbolic-parabolic predator-prey solver with a-priori bound checks."""

from .config import RunConfig, build_scenario, parse_config
from .convolution import (DriftSchedule, KernelSpec, normalize_kernel, omega_convolve,
                          velocity_field)
from .coupling import (CoupledRun, CoupledState, ModelSpec, PicardConfig, PicardDiagnostics,
                       freeze_coefficients, picard_window, run_coupled)
from .errors import (ConfigurationError, DegenerateKernelError, HypParabError,
                     LinearSolverError, ModelSpecError, NonContractionError,
                     PicardConvergenceError, StabilityError, UnsupportedDimensionError)
from .geometry import Field, Grid, VectorField, build_grid, discrete_norms
from .hyperbolic import TransportCoefficients, simulate_transport, transport_step
from .output import emit_outputs
from .parabolic import DiffusionCoefficients, diffusion_step, simulate_diffusion
from .verify import (BoundReport, check_hyperbolic_bounds, check_hyperbolic_pair,
                     check_parabolic_bounds, check_parabolic_pair, randomized_bound_suite,
                     stability_experiment)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
