"""Robust GLRT detection of a point target with an uncertain steering vector in compound-Gaussian clutter."""
from __future__ import annotations

__version__ = "0.1.0"

from .clutter import ClutterBatch, ClutterGenerator, generate_batch, toeplitz_covariance, trial_rng
from .covariance import ConvergenceError, CovarianceEstimate, fixed_point_mle, sample_covariance
from .detectors import (DetectionOutcome, SolverError, adaptive_detect, nmf_statistic,
                        theta_mle_statistic)
from .signal_model import (ConfigError, Hypothesis, MismatchInterval, ScenarioConfig, snr_to_alpha,
                           steering_vector)
from .trigpoly import TrigRatioCoeffs, build_arc_cone, eval_F, grid_max_F, solve_detector_sdp, trig_coeffs

__all__ = [
    "ClutterBatch", "ClutterGenerator", "ConfigError", "ConvergenceError", "CovarianceEstimate",
    "DetectionOutcome", "Hypothesis", "MismatchInterval", "ScenarioConfig", "SolverError",
    "TrigRatioCoeffs", "adaptive_detect", "build_arc_cone", "eval_F", "fixed_point_mle",
    "generate_batch", "grid_max_F", "nmf_statistic", "sample_covariance", "snr_to_alpha",
    "solve_detector_sdp", "steering_vector", "theta_mle_statistic", "toeplitz_covariance",
    "trial_rng", "trig_coeffs",
]
