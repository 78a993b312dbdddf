"""Parameter identification of an open qubit from saturated-pulse measurements."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .bloch import (
    ControlSpec,
    Parameters,
    generator,
    ideal_pulse,
    propagate,
    pulse,
    readout_probability,
    relax_closed_form,
)
from .design import (
    ParameterBox,
    ProtocolTimes,
    choose_t3,
    choose_tau2,
    design_times,
    min_shots,
    solve_t1,
    validate_times,
)
from .forward import forward_finite, forward_ideal, pulse_relax_pulse_prob, virtual_observables
from .measurement import (
    EmpiricalFrequencies,
    FileSource,
    ShotCounts,
    SimulatedSource,
    empirical_frequencies,
    sample_counts,
)
from .estimator import (
    EstimateReport,
    bias_box,
    bias_constants,
    chi2_quantile_4dof,
    confidence_ellipsoid,
    confidence_region,
    covariance,
    invert_ideal,
    jacobian_inverse_map,
)
from .adaptive import AdaptiveConfig, adaptive_identify, cross_filter, enumerate_candidates

__all__ = [
    "BACKEND", "ControlSpec", "Parameters", "generator", "ideal_pulse", "propagate", "pulse",
    "readout_probability", "relax_closed_form", "ParameterBox", "ProtocolTimes", "choose_t3",
    "choose_tau2", "design_times", "min_shots", "solve_t1", "validate_times", "forward_finite",
    "forward_ideal", "pulse_relax_pulse_prob", "virtual_observables", "EmpiricalFrequencies",
    "FileSource", "ShotCounts", "SimulatedSource", "empirical_frequencies", "sample_counts",
    "EstimateReport", "bias_box", "bias_constants", "chi2_quantile_4dof", "confidence_ellipsoid",
    "confidence_region", "covariance", "invert_ideal", "jacobian_inverse_map", "AdaptiveConfig",
    "adaptive_identify", "cross_filter", "enumerate_candidates",
]
