"""Dual-antenna RFID gait-speed monitoring: detection core, streaming engine,
gateway service, reader emulator, and evaluation toolkit."""

from gaitgate.core import (
    DetectionParams,
    EdgeDetection,
    ForwardDetector,
    InvalidIntervalError,
    ReferenceUnavailableError,
    RssiSample,
    baseline_threshold_detect,
    compute_gait_speed,
    detect_right_edge_reversed,
    offline_reference_edges,
)

__all__ = [
    "RssiSample",
    "DetectionParams",
    "EdgeDetection",
    "ForwardDetector",
    "InvalidIntervalError",
    "ReferenceUnavailableError",
    "detect_right_edge_reversed",
    "baseline_threshold_detect",
    "compute_gait_speed",
    "offline_reference_edges",
]
