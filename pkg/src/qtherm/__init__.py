"""Qubit thermometer in a Drude-Ohmic reservoir.

Exact hierarchy dynamics, a Born-Markov benchmark, Fisher-information
precision analysis, and the variational-polaron renormalization picture,
behind a reproducible experiment CLI (`qtherm run/validate/sweep`).
"""

__version__ = "0.1.0"

from .bath import (BathSpec, ExponentialSeries, auto_k_max,
                   correlation_from_series, correlation_quadrature,
                   dephasing_exponent, matsubara_expand)
from .bornmarkov import (BmGenerator, bm_propagate, bm_steady_state,
                         build_bm_generator)
from .config import (Diagnostic, GridSpec, OutputSpec, RunConfig, Truncation,
                     load_config, validate_config, validate_file)
from .errors import (ConfigError, DegenerateMatsubara, DegeneratePopulation,
                     DegenerateSteadyState, DivergentExponent,
                     HierarchyTooLarge, InconsistentPureDerivative,
                     InvalidDensity, NoConvergence, NoSteadyState,
                     QthermError, QuadratureNoConvergence, StepInstability)
from .estimation import (BetaOffsetRuns, BlochVector, QfiCurve,
                         bloch_from_density, collect_beta_offset_runs,
                         error_propagation_variance, finite_diff, gibbs_qfi,
                         gibbs_state, max_qfi_over_time, omega_star,
                         qfi_bloch, qfi_dynamics, qfi_from_runs,
                         renormalized_frequency_from_steady)
from .experiments import (RunResult, execute_run, execute_sweep,
                          replay_manifest)
from .hierarchy import (ConvergenceReport, HierarchyState, build_hierarchy,
                        convergence_sweep, hierarchy_rhs, hierarchy_size,
                        propagate, sigma_z_expectation, steady_state,
                        suggest_k_max)
from .manifest import RunManifest, file_sha256
from .model import (SensorParams, build_coupling_operator, build_initial_state,
                    build_sensor_hamiltonian, rotate_params)
from .polaron import PolaronSolution, solve_selfconsistent
from .trajectory import Trajectory

__all__ = [name for name in dir() if not name.startswith("_")]
