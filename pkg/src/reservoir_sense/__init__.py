"""Non-Markovian quantum sensing of a reservoir spectral density with a harmonic probe."""
from .dynamics import (ExactMoments, MarkovMoments, MomentTrajectory, drive_response,
                       evolve_moments, gibbs_covariance, markovian_moments, noise_integral,
                       steady_state_moments)
from .exceptions import (ConfigError, DomainError, IllConditionedError, RecurrenceError,
                         ReservoirSenseError, ResonanceError, ToleranceError,
                         UnstableParametersError)
from .model import (Drive, GaussianState, ProbeSpec, ReservoirSpec, SimGrid,
                    correlation_function, damping_kernel, init_gaussian_state,
                    inverse_state_params, resource_count, spectral_density)
from .propagators import (build_propagators, characteristic_roots, eval_propagators,
                          markovian_propagators)
from .qfi import (QfiCurve, QfiEvaluator, cramer_rao_bound, delta_qfi, finite_difference,
                  gaussian_qfi, max_qfi, qfi_trajectory, scaling_scan, theta_sweep)
from .special import lerch_phi

__version__ = "0.1.0"
