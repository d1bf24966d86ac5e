"""Private sequential probability ratio tests: simulation, privacy accounting and bounds."""

__version__ = "0.1.0"

from ._backend import DEFAULT as BACKEND
from .accounting import (
    RdpCurve,
    StoppingMoment,
    best_dp_report,
    compose_rdp,
    estimate_ta_tb,
    gaussian_rdp_curve,
    gen_above_thresh_rdp,
    privsprt_rdp_curve,
    rdp_to_dp,
)
from .bounds import BoundResult, error_rate_bound, sample_size_bound
from .mechanisms import NoiseMechanism, ParameterError, gaussian_sigma, privsprt_sigmas
from .models import DriftConstants, Hypothesis, HypothesisPair, TruncationSpec, drift_constants, kl_divergence
from .rng import RngStream
from .sequential_private import (
    PrivTestConfig,
    TestMode,
    gen_above_thresh,
    run_laplace_abovethresh_test,
    run_privsprt,
)
from .simulation import (
    CalibrationError,
    ExperimentConfig,
    McEstimate,
    calibrate_thresholds,
    estimate_error,
    estimate_expected_t,
    oc_asn_sweep,
)
from .sprt import Decision, SprtThresholds, TrialOutcome, run_sprt, wald_error_approx, wald_expected_t

__all__ = [
    "BACKEND", "BoundResult", "CalibrationError", "Decision", "DriftConstants", "ExperimentConfig",
    "Hypothesis", "HypothesisPair", "McEstimate", "NoiseMechanism", "ParameterError", "PrivTestConfig",
    "RdpCurve", "RngStream", "SprtThresholds", "StoppingMoment", "TestMode", "TrialOutcome",
    "TruncationSpec", "best_dp_report", "calibrate_thresholds", "compose_rdp", "drift_constants",
    "error_rate_bound", "estimate_error", "estimate_expected_t", "estimate_ta_tb", "gaussian_rdp_curve",
    "gaussian_sigma", "gen_above_thresh", "gen_above_thresh_rdp", "kl_divergence", "oc_asn_sweep",
    "privsprt_rdp_curve", "privsprt_sigmas", "rdp_to_dp", "run_laplace_abovethresh_test", "run_privsprt",
    "run_sprt", "sample_size_bound", "wald_error_approx", "wald_expected_t",
]
