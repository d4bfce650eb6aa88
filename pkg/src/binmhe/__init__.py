"""Moving-horizon state estimation for linear systems with binary threshold sensors."""

from .costs import (ConfigurationError, EstimatorConfig, QuadraticForm,
                    WindowEstimate, lsmhe_cost, lsmhe_quadratic, pwmhe_cost,
                    pwmhe_grad)
from .estimator import VARIANTS, EstimateRecord, EstimatorError, MheState, init, run, step
from .linsys import (InvalidLaplacianError, LtiModel, ModelError, NoiseBounds,
                     Trajectory, build_network, discretize, load_model,
                     rng_stream, save_model, simulate)
from .observability import (ObservabilityReport, check_uniform_observability,
                            observability_matrix, switching_density_condition,
                            uniform_observability)
from .sensing import (BinarySensorBank, InvalidMeasurementError,
                      MeasurementWindow, binarize, binarize_outputs,
                      sign_mismatch, slide, switching_set)
from .solvers import (ConstraintSet, SolveReport, build_threshold_constraints,
                      disturbance_rows, merge_constraints,
                      solve_constrained_lsmhe, solve_lsmhe, solve_pwmhe)
from .stability import (NoStabilizingEpsilonError, RecursionReport,
                        StabilityConstants, check_error_recursion,
                        compute_constants, empirical_response_bound,
                        find_epsilon, switching_response_matrices)

__version__ = "0.1.0"
