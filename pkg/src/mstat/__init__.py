"""Kernel M-statistics for offline and online change-point detection."""

from .kernels import KernelSpec, h_eval, kernel_eval, median_bandwidth, mmd_u_squared
from .moments import (HMoments, NullMoments, estimate_h_moments, null_moments, offline_correlation,
                      online_correlation, skewness_zb, third_moment_zb, var_zb)
from .offline import DetectionReport, OfflineScan, build_offline_blocks, detect_offline, scan
from .online import OnlineDetector, StoppingResult, run_until_stop
from .thresholds import (ThresholdSpec, nu, offline_sl, offline_sl_corrected, online_arl,
                         online_arl_corrected, solve_offline_threshold, solve_online_threshold,
                         solve_theta)

__all__ = [
    "KernelSpec", "h_eval", "kernel_eval", "median_bandwidth", "mmd_u_squared",
    "HMoments", "NullMoments", "estimate_h_moments", "null_moments", "offline_correlation",
    "online_correlation", "skewness_zb", "third_moment_zb", "var_zb",
    "DetectionReport", "OfflineScan", "build_offline_blocks", "detect_offline", "scan",
    "OnlineDetector", "StoppingResult", "run_until_stop",
    "ThresholdSpec", "nu", "offline_sl", "offline_sl_corrected", "online_arl",
    "online_arl_corrected", "solve_offline_threshold", "solve_online_threshold", "solve_theta",
]
