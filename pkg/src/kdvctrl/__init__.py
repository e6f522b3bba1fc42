"""Backstepping output-feedback boundary stabilization of the KdV equation.

Pipeline: solve the gain-kernel boundary-value problems on the triangle
(``kernels``), build the discrete operators and implicit step (``fdm``),
run the coupled plant-observer loop (``cloop``), and quantify decay and
the Lyapunov certificate (``analysis``).  ``cli`` wires it into the
``kdvctrl`` command.
"""

from .analysis import (DecayFit, DissipationReport, LyapunovConstants,
                       decay_fit, dissipation_check, l2_norm,
                       lyapunov_constants)
from .cache import cache_path, cache_read, cache_write
from .cloop import SimConfig, Trajectory, feedback_kappa, initial_profile, run
from .errors import (BlowUpError, CacheFormatError, CacheMiss,
                     ConfigurationError, ConvergenceError, DomainError,
                     KdvError, ResolutionError, SolverError, UsageError)
from .fdm import (DiscreteOperators, apply_right_boundary, build_operators,
                  fixed_point_step)
from .grids import SpaceTimeGrid, TriangleGrid, build_triangle_grid
from .kernels import (GainVectors, KernelTable, ResidualReport,
                      apply_volterra, build_gains, extract_feedback_gain,
                      extract_observer_gain, kernel_residuals, solve_kernel,
                      zero_gains)

__version__ = "0.1.0"
