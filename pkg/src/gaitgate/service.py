"""Streaming engine: read routing, per-tag worker threads, result fan-out.

One worker thread per registered tag owns that tag's session state
exclusively and communicates through a bounded inbox, so a stalled or
flooded tag can never delay another tag's trials. Completed trials are
appended to the trial log and pushed to subscribers through bounded
per-subscriber queues that drop the subscriber rather than back-pressure
the engine.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from gaitgate.core import DetectionParams
from gaitgate.session import (
    DEFAULT_PORT_ROLES,
    ROLE_IGNORED,
    Phase,
    SessionConfig,
    TagIdentity,
    TagRead,
    TagRegistry,
    TagSession,
    TrialResult,
    persist_trial,
)

logger = logging.getLogger(__name__)

SUBSCRIBER_QUEUE_SIZE = 256


@dataclass
class RoutingCounters:
    """Read accounting; accepted + ignored + overflow covers every submission."""

    accepted: int = 0
    unknown_epc: int = 0
    ignored_role: int = 0
    overflow: int = 0

    @property
    def ignored(self) -> int:
        return self.unknown_epc + self.ignored_role

    @property
    def total(self) -> int:
        return self.accepted + self.ignored + self.overflow

    def snapshot(self) -> dict:
        return {
            "accepted": self.accepted,
            "unknownEpc": self.unknown_epc,
            "ignoredRole": self.ignored_role,
            "overflow": self.overflow,
        }


class Subscription:
    """A bounded mailbox for one push-channel subscriber."""

    def __init__(self, capacity: int = SUBSCRIBER_QUEUE_SIZE) -> None:
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self.dropped = False

    def offer(self, message: dict) -> bool:
        if self.dropped:
            return False
        try:
            self._queue.put_nowait(message)
            return True
        except queue.Full:
            self.dropped = True
            return False

    def get(self, timeout: Optional[float] = None) -> Optional[dict]:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None


class Broadcaster:
    """Fan-out of result messages with per-subscriber isolation."""

    def __init__(self) -> None:
        self._subscribers: list[Subscription] = []
        self._lock = threading.Lock()

    def subscribe(self) -> Subscription:
        sub = Subscription()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def publish(self, message: dict) -> int:
        """Deliver to every healthy subscriber; returns the delivered count."""
        with self._lock:
            subs = list(self._subscribers)
        delivered = 0
        dead = []
        for sub in subs:
            if sub.offer(message):
                delivered += 1
            else:
                dead.append(sub)
        if dead:
            with self._lock:
                for sub in dead:
                    if sub in self._subscribers:
                        self._subscribers.remove(sub)
                        logger.warning("dropped slow push-channel subscriber")
        return delivered

    def __len__(self) -> int:
        with self._lock:
            return len(self._subscribers)


class _TagWorker:
    """Owns one tag's session; consumes its inbox until stopped."""

    _POLL_S = 0.25

    def __init__(self, session: TagSession, inbox_capacity: int,
                 on_result: Callable[[TrialResult], None]) -> None:
        self.session = session
        self.inbox: queue.Queue = queue.Queue(maxsize=inbox_capacity)
        self._on_result = on_result
        self._stop = threading.Event()
        self._pending_params: Optional[DetectionParams] = None
        self._last_wall: Optional[float] = None
        self.thread = threading.Thread(
            target=self._run, name=f"tag-{session.tag.label}", daemon=True)
        self.thread.start()

    def submit(self, read: TagRead, role: str) -> bool:
        try:
            self.inbox.put_nowait((read, role))
            return True
        except queue.Full:
            return False

    def set_params(self, params: DetectionParams) -> None:
        self._pending_params = params

    def stop(self, timeout: float = 5.0) -> None:
        self._stop.set()
        self.thread.join(timeout=timeout)

    def _maybe_apply_params(self) -> None:
        pending = self._pending_params
        if pending is None:
            return
        if self.session.phase in (Phase.IDLE, Phase.COOLDOWN):
            tag, config = self.session.tag, self.session.config
            cooldown = self.session.cooldown_until_us
            self.session = TagSession(tag, pending, config)
            self.session.cooldown_until_us = cooldown
            if cooldown is not None:
                self.session.phase = Phase.COOLDOWN
            self._pending_params = None

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                read, role = self.inbox.get(timeout=self._POLL_S)
            except queue.Empty:
                self._check_idle_expiry()
                continue
            self._maybe_apply_params()
            self._last_wall = time.monotonic()
            try:
                result = self.session.process_read(read, role)
            except Exception:
                logger.exception("tag %s: error processing read",
                                 self.session.tag.label)
                continue
            if result is not None:
                self._on_result(result)

    def _check_idle_expiry(self) -> None:
        # Stream time stalls between reads; advance it by the wall-clock gap
        # so stalled trials still time out.
        if self._last_wall is None or self.session.last_read_us is None:
            return
        elapsed_us = int((time.monotonic() - self._last_wall) * 1e6)
        result = self.session.expire_if_idle(
            self.session.last_read_us + elapsed_us)
        if result is not None:
            self._on_result(result)


class GaitSpeedService:
    """Registry + routing + per-tag pipelines + persistence + broadcast."""

    def __init__(
        self,
        params: DetectionParams = DetectionParams(),
        session_config: SessionConfig = SessionConfig(),
        port_roles: Optional[dict[int, str]] = None,
        trial_log_path: Optional[Path] = None,
    ) -> None:
        self.registry = TagRegistry()
        self.broadcaster = Broadcaster()
        self.counters = RoutingCounters()
        self.session_config = session_config
        self.trial_log_path = trial_log_path
        self._params = params
        self._port_roles = dict(port_roles or DEFAULT_PORT_ROLES)
        self._workers: dict[str, _TagWorker] = {}
        self._lock = threading.Lock()

    # -- configuration -----------------------------------------------------

    @property
    def params(self) -> DetectionParams:
        with self._lock:
            return self._params

    def set_params(self, params: DetectionParams) -> None:
        """Apply new detection parameters to future trials only."""
        with self._lock:
            self._params = params
            for worker in self._workers.values():
                worker.set_params(params)

    @property
    def port_roles(self) -> dict[int, str]:
        with self._lock:
            return dict(self._port_roles)

    def set_port_roles(self, roles: dict[int, str]) -> None:
        with self._lock:
            self._port_roles = dict(roles)

    # -- registry ----------------------------------------------------------

    def register_tag(self, label: str, epc: str) -> TagIdentity:
        with self._lock:
            tag = self.registry.register(label, epc)
            session = TagSession(tag, self._params, self.session_config)
            self._workers[tag.epc] = _TagWorker(
                session, self.session_config.inbox_capacity, self._on_result)
        return tag

    def remove_tag(self, label: str) -> TagIdentity:
        with self._lock:
            tag = self.registry.remove(label)
            worker = self._workers.pop(tag.epc)
        worker.stop()
        return tag

    def tags(self) -> list[TagIdentity]:
        with self._lock:
            return list(self.registry)

    # -- streaming ---------------------------------------------------------

    def route_read(self, read: TagRead) -> bool:
        """Enqueue one read; never blocks. Returns True when accepted."""
        role = self._port_roles.get(read.antenna_port, ROLE_IGNORED)
        with self._lock:
            tag = self.registry.lookup_epc(read.epc)
            worker = self._workers.get(tag.epc) if tag else None
        if tag is None or worker is None:
            with self._lock:
                self.counters.unknown_epc += 1
            return False
        if role == ROLE_IGNORED:
            with self._lock:
                self.counters.ignored_role += 1
            return False
        if worker.submit(read, role):
            with self._lock:
                self.counters.accepted += 1
            return True
        with self._lock:
            self.counters.overflow += 1
        return False

    def _on_result(self, result: TrialResult) -> None:
        if self.trial_log_path is not None:
            try:
                persist_trial(self.trial_log_path, result)
            except OSError:
                logger.exception("failed to persist trial for %s",
                                 result.tag.label)
        message = dict(result.to_wire())
        message["type"] = "gait_speed"
        self.broadcaster.publish(message)

    # -- lifecycle ---------------------------------------------------------

    def stop(self) -> None:
        with self._lock:
            workers = list(self._workers.values())
        for worker in workers:
            worker.stop()

    def drain(self, timeout_s: float = 10.0) -> bool:
        """Wait until every tag inbox is empty (test/replay convenience)."""
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            with self._lock:
                workers = list(self._workers.values())
            if all(w.inbox.empty() for w in workers):
                # one extra poll so in-flight reads finish processing
                time.sleep(0.05)
                if all(w.inbox.empty() for w in workers):
                    return True
            time.sleep(0.01)
        return False
