"""Observability constants from measurable time sets on finite spectral models."""

from .analytic import (
    DerivativeBoundCertificate,
    SmallnessResult,
    certificate_log_residuals,
    derivative_bound_certify,
    g_derivative,
    polynomial_taylor_data,
    remez_oracle,
    smallness_check,
)
from .control import (
    BangBangReport,
    ControlGrid,
    MinNormSolution,
    TimeOptimalProblem,
    bang_bang_check,
    min_norm_control,
    optimal_time,
    problem_from_dict,
    simulate,
)
from .exceptions import ConvergenceError, DataIntegrityError, UnobservableError
from .observability import (
    SUITE_SEED,
    DerivedConstants,
    HypothesisHCertificate,
    IntervalBoundSpec,
    ObservabilityReport,
    certify_hypothesis_h,
    decay_tradeoff_bound,
    decay_tradeoff_maximum,
    empirical_l1_ratio,
    fit_interval_bound,
    gramian_l2,
    interpolation_one_time,
    interpolation_two_times,
    interval_chain_ratio,
    interval_constant_table,
    l1_observation_integral,
    l2_to_l1_ratio,
    obs_constant_l2,
    obs_measurable_theorem1,
    obs_measurable_theorem2,
    observation_norms,
    spectral_constant,
    state_norms,
    telescope_l2_to_l1,
    telescoping_ratio,
    trial_states,
    verify_interpolation_one_time,
    verify_l1_on_interval,
)
from .spectral import (
    DISSIPATIVE,
    UNITARY,
    ObservationOperator,
    SpectralModel,
    make_diagonal,
    make_heat_1d,
    model_from_descriptor,
    model_to_descriptor,
    observation_intensity,
    semigroup_apply,
    state_derivative,
)
from .timesets import (
    TelescopeSequence,
    TimeSet,
    density_point,
    geometric_horizon_sequence,
    intersect_measure,
    make_time_set,
    telescope_for_density,
    timeset_from_dict,
    timeset_to_dict,
)

__version__ = "0.1.0"
