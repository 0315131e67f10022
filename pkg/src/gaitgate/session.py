"""Per-tag walking-trial state machines, tag registry, and trial persistence.

Each registered tag owns an independent session that accumulates entry-antenna
reads, uses the first exit-antenna read as a completion trigger for the
reverse-order entry-edge search, then tracks the exit antenna's forward
detector until it fires and the trial can be timed and classified.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Optional

from gaitgate.core import (
    DetectionParams,
    ForwardDetector,
    InvalidIntervalError,
    RssiSample,
    compute_gait_speed,
    detect_right_edge_reversed,
)

logger = logging.getLogger(__name__)

_EPC_RE = re.compile(r"^[0-9A-Fa-f]{24}$")

ROLE_ENTRY = "entry"
ROLE_EXIT = "exit"
ROLE_IGNORED = "ignored"

DEFAULT_PORT_ROLES = {1: ROLE_ENTRY, 2: ROLE_EXIT}

# Clinically plausible walking range; values outside are flagged, zero means
# the pipeline produced no valid interval at all.
MIN_VALID_SPEED_MPS = 0.2
MAX_VALID_SPEED_MPS = 2.0


class RegistrationConflictError(ValueError):
    """Label or EPC already present in the registry."""


@dataclass(frozen=True)
class TagIdentity:
    label: str
    epc: str

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("label must be non-empty")
        if not _EPC_RE.match(self.epc):
            raise ValueError(
                f"epc must be a 24-character hex string, got {self.epc!r}")


@dataclass(frozen=True)
class TagRead:
    """One wire-level reader observation."""

    epc: str
    antenna_port: int
    timestamp_us: int
    rssi_dbm: float

    def __post_init__(self) -> None:
        if self.timestamp_us < 0:
            raise ValueError("timestamp_us must be >= 0")
        if self.antenna_port <= 0:
            raise ValueError("antenna_port must be positive")

    def sample(self) -> RssiSample:
        return RssiSample(self.timestamp_us, self.rssi_dbm)


class Classification(enum.Enum):
    SUCCESS = "success"
    ERRONEOUS = "erroneous"
    SYSTEM_FAILURE = "systemFailure"


def classify_result(speed_mps: float) -> Classification:
    """Partition a reported speed into exactly one outcome class."""
    if speed_mps < 0:
        raise ValueError("speed_mps must be >= 0")
    if speed_mps == 0:
        return Classification.SYSTEM_FAILURE
    if MIN_VALID_SPEED_MPS <= speed_mps <= MAX_VALID_SPEED_MPS:
        return Classification.SUCCESS
    return Classification.ERRONEOUS


class Phase(enum.Enum):
    IDLE = "idle"
    ACCUMULATING = "accumulating"
    EXIT_TRACKING = "exitTracking"
    COOLDOWN = "cooldown"


@dataclass(frozen=True)
class SessionConfig:
    cooldown_s: float = 10.0
    idle_timeout_s: float = 120.0
    entry_buffer_capacity: int = 4096
    inbox_capacity: int = 1024
    # optional RSSI floor on the exit-trigger read (disabled by default)
    exit_trigger_floor_dbm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.cooldown_s < 0 or self.idle_timeout_s <= 0:
            raise ValueError("cooldown_s must be >= 0 and idle_timeout_s > 0")
        if self.entry_buffer_capacity < 1 or self.inbox_capacity < 1:
            raise ValueError("buffer capacities must be >= 1")


@dataclass(frozen=True)
class TrialResult:
    tag: TagIdentity
    t_start_us: Optional[int]
    t_end_us: Optional[int]
    speed_mps: float
    classification: Classification
    entry_sample_count: int
    exit_sample_count: int
    completed_at: datetime
    params: DetectionParams

    def to_wire(self) -> dict:
        return {
            "epc": self.tag.epc,
            "label": self.tag.label,
            "tStartUs": self.t_start_us,
            "tEndUs": self.t_end_us,
            "speedMps": self.speed_mps,
            "classification": self.classification.value,
            "entrySamples": self.entry_sample_count,
            "exitSamples": self.exit_sample_count,
            "completedAt": self.completed_at.isoformat(),
            "params": {
                "w1": self.params.w1,
                "w2": self.params.w2,
                "tau1": self.params.tau1,
                "tau2": self.params.tau2,
                "distanceM": self.params.distance_m,
            },
        }

    @staticmethod
    def from_wire(record: dict) -> "TrialResult":
        p = record["params"]
        return TrialResult(
            tag=TagIdentity(record["label"], record["epc"]),
            t_start_us=record["tStartUs"],
            t_end_us=record["tEndUs"],
            speed_mps=record["speedMps"],
            classification=Classification(record["classification"]),
            entry_sample_count=record["entrySamples"],
            exit_sample_count=record["exitSamples"],
            completed_at=datetime.fromisoformat(record["completedAt"]),
            params=DetectionParams(w1=p["w1"], w2=p["w2"], tau1=p["tau1"],
                                   tau2=p["tau2"], distance_m=p["distanceM"]),
        )


def _now() -> datetime:
    return datetime.now(timezone.utc)


class TagSession:
    """State machine for one tag's walking trials.

    Not thread-safe; the service layer guarantees a single consumer per tag.
    Stream time (read timestamps) drives cooldown and inactivity handling so
    replayed captures behave identically to live traffic.
    """

    def __init__(self, tag: TagIdentity, params: DetectionParams,
                 config: SessionConfig = SessionConfig()) -> None:
        self.tag = tag
        self.params = params
        self.config = config
        self.phase = Phase.IDLE
        self.entry_buffer: deque[RssiSample] = deque(
            maxlen=config.entry_buffer_capacity)
        self.exit_detector = ForwardDetector(w=params.w2, tau=params.tau2)
        self.t_start_us: Optional[int] = None
        self.last_read_us: Optional[int] = None
        self.cooldown_until_us: Optional[int] = None
        self.exit_sample_count = 0
        self._entry_count_at_trigger: Optional[int] = None

    # -- lifecycle ---------------------------------------------------------

    def _reset(self, cooldown_from_us: Optional[int] = None) -> None:
        self.entry_buffer.clear()
        self.exit_detector = ForwardDetector(w=self.params.w2,
                                             tau=self.params.tau2)
        self.t_start_us = None
        self.exit_sample_count = 0
        self._entry_count_at_trigger = None
        if cooldown_from_us is None:
            self.phase = Phase.IDLE
            self.cooldown_until_us = None
        else:
            self.phase = Phase.COOLDOWN
            self.cooldown_until_us = (
                cooldown_from_us + int(self.config.cooldown_s * 1e6))

    def _result(self, speed: float, t_start: Optional[int],
                t_end: Optional[int],
                completed_at: Optional[datetime]) -> TrialResult:
        return TrialResult(
            tag=self.tag,
            t_start_us=t_start,
            t_end_us=t_end,
            speed_mps=speed,
            classification=classify_result(speed),
            entry_sample_count=(len(self.entry_buffer)
                                if self._entry_count_at_trigger is None
                                else self._entry_count_at_trigger),
            exit_sample_count=self.exit_sample_count,
            completed_at=completed_at or _now(),
            params=self.params,
        )

    def _failure(self, from_us: Optional[int],
                 completed_at: Optional[datetime]) -> TrialResult:
        result = self._result(0.0, None, None, completed_at)
        self._reset(cooldown_from_us=from_us)
        return result

    # -- input -------------------------------------------------------------

    def process_read(self, read: TagRead, role: str,
                     completed_at: Optional[datetime] = None,
                     ) -> Optional[TrialResult]:
        """Advance the state machine with one read; may complete a trial."""
        if read.epc != self.tag.epc:
            raise ValueError("read routed to the wrong tag session")
        if role == ROLE_IGNORED:
            return None

        if self.phase is Phase.COOLDOWN:
            if (self.cooldown_until_us is not None
                    and read.timestamp_us < self.cooldown_until_us):
                return None
            self.phase = Phase.IDLE
            self.cooldown_until_us = None

        self.last_read_us = read.timestamp_us

        if role == ROLE_ENTRY:
            return self._on_entry(read)
        if role == ROLE_EXIT:
            return self._on_exit(read, completed_at)
        raise ValueError(f"unknown antenna role {role!r}")

    def _on_entry(self, read: TagRead) -> None:
        if self.phase is Phase.EXIT_TRACKING:
            # re-entry into the first beam mid-trial is discarded
            return None
        if (self.entry_buffer
                and read.timestamp_us <= self.entry_buffer[-1].timestamp_us):
            return None  # defensive: per-antenna order is normally guaranteed
        self.entry_buffer.append(read.sample())
        self.phase = Phase.ACCUMULATING
        return None

    def _on_exit(self, read: TagRead,
                 completed_at: Optional[datetime]) -> Optional[TrialResult]:
        floor = self.config.exit_trigger_floor_dbm
        if (self.phase in (Phase.IDLE, Phase.ACCUMULATING)
                and floor is not None and read.rssi_dbm < floor):
            return None

        if self.phase in (Phase.IDLE, Phase.ACCUMULATING):
            entry = [s for s in self.entry_buffer
                     if s.timestamp_us < read.timestamp_us]
            self._entry_count_at_trigger = len(entry)
            edge = detect_right_edge_reversed(entry, self.params.w1,
                                              self.params.tau1)
            if edge is None:
                return self._failure(read.timestamp_us, completed_at)
            self.t_start_us = edge.edge_timestamp_us
            self.phase = Phase.EXIT_TRACKING
            return self._feed_exit(read, completed_at)

        if self.phase is Phase.EXIT_TRACKING:
            return self._feed_exit(read, completed_at)
        return None

    def _feed_exit(self, read: TagRead,
                   completed_at: Optional[datetime]) -> Optional[TrialResult]:
        sample = read.sample()
        try:
            edge = self.exit_detector.step(sample)
        except ValueError:
            return None  # defensive: out-of-order exit read
        self.exit_sample_count += 1
        if edge is None:
            return None
        t_start, t_end = self.t_start_us, edge.edge_timestamp_us
        try:
            speed = compute_gait_speed(t_start, t_end, self.params.distance_m)
        except InvalidIntervalError:
            return self._failure(read.timestamp_us, completed_at)
        result = self._result(speed, t_start, t_end, completed_at)
        self._reset(cooldown_from_us=read.timestamp_us)
        return result

    # -- time --------------------------------------------------------------

    def expire_if_idle(self, now_us: int,
                       completed_at: Optional[datetime] = None,
                       ) -> Optional[TrialResult]:
        """Abort a stalled trial after the inactivity timeout."""
        if self.phase not in (Phase.ACCUMULATING, Phase.EXIT_TRACKING):
            return None
        if self.last_read_us is None:
            return None
        if now_us - self.last_read_us < self.config.idle_timeout_s * 1e6:
            return None
        result = self._result(0.0, None, None, completed_at)
        self._reset()
        return result


class TagRegistry:
    """Label <-> EPC bookkeeping with uniqueness on both axes."""

    def __init__(self) -> None:
        self._by_epc: dict[str, TagIdentity] = {}
        self._by_label: dict[str, TagIdentity] = {}

    def register(self, label: str, epc: str) -> TagIdentity:
        tag = TagIdentity(label, epc)  # validates
        key = tag.epc.upper()
        if key in self._by_epc:
            raise RegistrationConflictError(f"epc {epc} already registered")
        if label in self._by_label:
            raise RegistrationConflictError(f"label {label!r} already registered")
        canonical = TagIdentity(label, key)
        self._by_epc[key] = canonical
        self._by_label[label] = canonical
        return canonical

    def remove(self, label: str) -> TagIdentity:
        tag = self._by_label.pop(label, None)
        if tag is None:
            raise KeyError(label)
        del self._by_epc[tag.epc]
        return tag

    def lookup_epc(self, epc: str) -> Optional[TagIdentity]:
        return self._by_epc.get(epc.upper())

    def lookup_label(self, label: str) -> Optional[TagIdentity]:
        return self._by_label.get(label)

    def __iter__(self) -> Iterator[TagIdentity]:
        return iter(sorted(self._by_label.values(), key=lambda t: t.label))

    def __len__(self) -> int:
        return len(self._by_label)


# ---------------------------------------------------------------------------
# Trial-log persistence: append-only JSON lines.
# ---------------------------------------------------------------------------

def persist_trial(path: Path, result: TrialResult) -> None:
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(result.to_wire(), sort_keys=True) + "\n")


def load_trials(
    path: Path,
    epc: Optional[str] = None,
    since: Optional[datetime] = None,
    limit: Optional[int] = None,
) -> list[TrialResult]:
    """Read the trial log, newest first, with optional filters.

    A corrupt trailing line (interrupted write) is skipped with a warning;
    corruption anywhere else is surfaced as an error.
    """
    if not path.exists():
        return []
    results: list[TrialResult] = []
    with path.open(encoding="utf-8") as f:
        lines = f.read().splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            results.append(TrialResult.from_wire(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            if i == len(lines) - 1:
                logger.warning("skipping corrupt trailing trial-log line: %s", exc)
                continue
            raise
    if epc is not None:
        results = [r for r in results if r.tag.epc == epc.upper()]
    if since is not None:
        results = [r for r in results if r.completed_at >= since]
    results.reverse()
    if limit is not None:
        results = results[:limit]
    return results
