"""Pure algorithmic core for dual-antenna gait-speed measurement.

Everything here is deterministic and side-effect free: RSSI sample types,
the reverse-order right-edge detector for the entry antenna, the streaming
forward-order detector for the exit antenna, a fixed-threshold baseline,
and the speed computation from the two edge timestamps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

DEFAULT_WINDOW = 14
DEFAULT_DROP_THRESHOLD_DBM = 1.0
DEFAULT_ANTENNA_DISTANCE_M = 4.0


class InvalidIntervalError(ValueError):
    """Raised when the exit edge does not come after the entry edge."""


class ReferenceUnavailableError(ValueError):
    """Raised when an offline reference cannot be computed for a walk."""


@dataclass(frozen=True)
class RssiSample:
    """One timestamped RSSI observation of one tag at one antenna."""

    timestamp_us: int
    rssi_dbm: float

    def __post_init__(self) -> None:
        if self.timestamp_us < 0:
            raise ValueError(f"timestamp_us must be >= 0, got {self.timestamp_us}")


@dataclass(frozen=True)
class DetectionParams:
    """Full configuration of the edge detectors and the timing gate geometry.

    w1/w2 are moving-window sizes in samples, tau1/tau2 the drop thresholds
    in dBm, distance_m the antenna separation.
    """

    w1: int = DEFAULT_WINDOW
    w2: int = DEFAULT_WINDOW
    tau1: float = DEFAULT_DROP_THRESHOLD_DBM
    tau2: float = DEFAULT_DROP_THRESHOLD_DBM
    distance_m: float = DEFAULT_ANTENNA_DISTANCE_M

    def __post_init__(self) -> None:
        if self.w1 < 2 or self.w2 < 2:
            raise ValueError("window sizes must be >= 2")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError("drop thresholds must be > 0")
        if self.distance_m <= 0:
            raise ValueError("distance_m must be > 0")


@dataclass(frozen=True)
class EdgeDetection:
    """Right edge of an RSSI peak: the last sample before sustained descent.

    trigger_index is the 0-based index, in the processed order (reversed for
    the entry detector, arrival order for the exit detector), of the sample
    whose arrival satisfied the drop condition.
    """

    edge_timestamp_us: int
    peak_rssi_dbm: float
    trigger_index: int


def _require_strictly_increasing(samples: Sequence[RssiSample]) -> None:
    for a, b in zip(samples, samples[1:]):
        if b.timestamp_us <= a.timestamp_us:
            raise ValueError(
                "sample timestamps must be strictly increasing "
                f"({a.timestamp_us} followed by {b.timestamp_us})"
            )


def _window_max(window: Sequence[RssiSample]) -> RssiSample:
    # Strict greater-than scan from the window's first element, so ties keep
    # the earliest-appended sample. For the reversed detector that sample is
    # the latest in forward time, which is what makes a flat plateau resolve
    # to its right edge.
    best = window[0]
    for s in window:
        if s.rssi_dbm > best.rssi_dbm:
            best = s
    return best


def detect_right_edge_reversed(
    samples: Sequence[RssiSample], w: int, tau: float
) -> Optional[EdgeDetection]:
    """Entry-antenna right-edge detection over a complete buffered trace.

    Processes the trace newest-to-oldest with a moving window of ``w``
    samples. Within each full window the maximum RSSI is compared with the
    RSSI of the most recently appended (oldest in forward time) sample; the
    first window whose drop reaches ``tau`` yields the edge, timestamped at
    the window maximum. Because traversal starts from the newest sample,
    the last peak in forward time is found before any earlier false peaks.

    Returns None when the trace is shorter than ``w`` or no window fires.
    """
    if w < 2:
        raise ValueError("w must be >= 2")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    _require_strictly_increasing(samples)
    if len(samples) < w:
        return None

    reversed_samples = list(reversed(samples))
    window: deque[RssiSample] = deque(maxlen=w)
    for i, sample in enumerate(reversed_samples):
        window.append(sample)
        if len(window) < w:
            continue
        peak = _window_max(window)
        r_current = window[-1].rssi_dbm
        if peak.rssi_dbm - r_current >= tau:
            return EdgeDetection(
                edge_timestamp_us=peak.timestamp_us,
                peak_rssi_dbm=peak.rssi_dbm,
                trigger_index=i,
            )
    return None


@dataclass
class ForwardDetector:
    """Streaming exit-antenna detector; feed samples in arrival order.

    Latches after the first firing: further ``step`` calls return None until
    ``reset``. The reported edge is the second-to-last window sample (one
    before the sample whose arrival confirmed the descent), compensating
    the one-sample confirmation delay.
    """

    w: int = DEFAULT_WINDOW
    tau: float = DEFAULT_DROP_THRESHOLD_DBM
    _window: deque = field(default_factory=deque, repr=False)
    _count: int = 0
    _fired: bool = False
    _last_timestamp_us: Optional[int] = None

    def __post_init__(self) -> None:
        if self.w < 2:
            raise ValueError("w must be >= 2")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        self._window = deque(maxlen=self.w)

    @property
    def fired(self) -> bool:
        return self._fired

    @property
    def samples_seen(self) -> int:
        return self._count

    def reset(self) -> None:
        self._window.clear()
        self._count = 0
        self._fired = False
        self._last_timestamp_us = None

    def step(self, sample: RssiSample) -> Optional[EdgeDetection]:
        if self._last_timestamp_us is not None and sample.timestamp_us <= self._last_timestamp_us:
            raise ValueError(
                "sample timestamps must be strictly increasing "
                f"({self._last_timestamp_us} followed by {sample.timestamp_us})"
            )
        self._last_timestamp_us = sample.timestamp_us
        index = self._count
        self._count += 1
        if self._fired:
            return None
        self._window.append(sample)
        if len(self._window) < self.w:
            return None
        peak = _window_max(self._window)
        if peak.rssi_dbm - sample.rssi_dbm >= self.tau:
            self._fired = True
            return EdgeDetection(
                edge_timestamp_us=self._window[-2].timestamp_us,
                peak_rssi_dbm=peak.rssi_dbm,
                trigger_index=index,
            )
        return None


def detect_right_edge_forward(
    samples: Sequence[RssiSample], w: int, tau: float
) -> Optional[EdgeDetection]:
    """Batch-mode forward detection: the streaming detector over a full trace."""
    detector = ForwardDetector(w=w, tau=tau)
    for sample in samples:
        edge = detector.step(sample)
        if edge is not None:
            return edge
    return None


def compute_gait_speed(t_start_us: int, t_end_us: int, distance_m: float) -> float:
    """Speed in m/s over ``distance_m`` between the two edge timestamps."""
    if distance_m <= 0:
        raise ValueError("distance_m must be > 0")
    if t_end_us <= t_start_us:
        raise InvalidIntervalError(
            f"exit edge ({t_end_us} us) must be after entry edge ({t_start_us} us)"
        )
    return distance_m / ((t_end_us - t_start_us) * 1e-6)


def baseline_threshold_detect(
    samples: Sequence[RssiSample],
    threshold_dbm: float,
    scan_order: Literal["forward", "reverse"],
) -> Optional[int]:
    """Fixed-threshold baseline: timestamp of the first (forward) or last
    (reverse) sample at or above ``threshold_dbm``; None when nothing crosses."""
    _require_strictly_increasing(samples)
    if scan_order == "forward":
        ordered: Sequence[RssiSample] = samples
    elif scan_order == "reverse":
        ordered = list(reversed(samples))
    else:
        raise ValueError(f"scan_order must be 'forward' or 'reverse', got {scan_order!r}")
    for sample in ordered:
        if sample.rssi_dbm >= threshold_dbm:
            return sample.timestamp_us
    return None


def offline_reference_edges(
    trace1: Sequence[RssiSample],
    trace2: Sequence[RssiSample],
    params: DetectionParams,
) -> tuple[int, int]:
    """Reference edge pair from complete per-antenna traces of one walk.

    Mirrors the streaming engine: the entry trace is truncated to samples
    before the exit trace begins, then the reversed detector runs on it and
    batch forward detection on the exit trace. When the exit trace starts at
    or before the entry trace (per-antenna clocks rather than one shared
    stream clock), the entry trace is used whole.
    """
    if not trace2:
        raise ReferenceUnavailableError("exit trace is empty")
    first_exit_us = trace2[0].timestamp_us
    if trace1 and first_exit_us > trace1[0].timestamp_us:
        entry = [s for s in trace1 if s.timestamp_us < first_exit_us]
    else:
        entry = list(trace1)

    start_edge = detect_right_edge_reversed(entry, params.w1, params.tau1)
    if start_edge is None:
        raise ReferenceUnavailableError("no entry edge detected")
    end_edge = detect_right_edge_forward(trace2, params.w2, params.tau2)
    if end_edge is None:
        raise ReferenceUnavailableError("no exit edge detected")
    return start_edge.edge_timestamp_us, end_edge.edge_timestamp_us
