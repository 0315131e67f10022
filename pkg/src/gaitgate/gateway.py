"""HTTP boundary: read ingestion, tag/config/trial REST API, result push.

The reader (or the replay tool) POSTs JSON batches of tag reads; ingestion
validates and routes them without waiting on detection. Subscribers receive
completed-trial messages over a persistent push channel with heartbeats.
"""

from __future__ import annotations

import asyncio
import logging
import time
from datetime import datetime
from typing import Optional

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from gaitgate.core import DetectionParams
from gaitgate.service import GaitSpeedService
from gaitgate.session import (
    ROLE_ENTRY,
    ROLE_EXIT,
    ROLE_IGNORED,
    RegistrationConflictError,
    TagRead,
    load_trials,
)

logger = logging.getLogger(__name__)

MAX_BATCH_READS = 10_000
_VALID_ROLES = {ROLE_ENTRY, ROLE_EXIT, ROLE_IGNORED}


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def _parse_read(record: object, index: int) -> TagRead:
    if not isinstance(record, dict):
        raise ValueError(f"reads[{index}] is not an object")
    try:
        epc = record["epc"]
        port = record["antennaPort"]
        ts = record["timestampUs"]
        rssi = record["rssi"]
    except KeyError as exc:
        raise ValueError(f"reads[{index}] missing key {exc.args[0]}") from exc
    if not isinstance(epc, str):
        raise ValueError(f"reads[{index}].epc must be a string")
    if not isinstance(port, int) or isinstance(port, bool):
        raise ValueError(f"reads[{index}].antennaPort must be an integer")
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise ValueError(f"reads[{index}].timestampUs must be an integer")
    if not isinstance(rssi, (int, float)) or isinstance(rssi, bool):
        raise ValueError(f"reads[{index}].rssi must be a number")
    try:
        return TagRead(epc=epc, antenna_port=port, timestamp_us=ts,
                       rssi_dbm=float(rssi))
    except ValueError as exc:
        raise ValueError(f"reads[{index}]: {exc}") from exc


def _params_from_wire(body: dict) -> DetectionParams:
    try:
        return DetectionParams(
            w1=body["w1"], w2=body["w2"],
            tau1=body["tau1"], tau2=body["tau2"],
            distance_m=body.get("distanceM", 4.0),
        )
    except KeyError as exc:
        raise ValueError(f"missing key {exc.args[0]}") from exc


def _params_to_wire(params: DetectionParams) -> dict:
    return {"w1": params.w1, "w2": params.w2, "tau1": params.tau1,
            "tau2": params.tau2, "distanceM": params.distance_m}


def create_app(service: GaitSpeedService,
               heartbeat_s: float = 15.0) -> FastAPI:
    app = FastAPI(title="gaitgate", docs_url=None, redoc_url=None)
    app.state.service = service

    # -- ingestion ---------------------------------------------------------

    @app.post("/api/reads")
    async def post_reads(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body is not valid JSON")
        if not isinstance(body, dict) or not isinstance(body.get("reads"), list):
            return _error(400, 'body must be {"reads": [...]}')
        raw = body["reads"]
        if len(raw) == 0:
            return _error(400, "reads must be non-empty")
        if len(raw) > MAX_BATCH_READS:
            return _error(413, f"batch exceeds {MAX_BATCH_READS} reads")
        try:
            reads = [_parse_read(r, i) for i, r in enumerate(raw)]
        except ValueError as exc:
            return _error(400, str(exc))
        # normalize within-batch ordering defensively
        reads.sort(key=lambda r: r.timestamp_us)
        routed = sum(1 for r in reads if service.route_read(r))
        return {"received": len(reads), "accepted": routed,
                "counters": service.counters.snapshot()}

    # -- tags --------------------------------------------------------------

    @app.get("/api/tags")
    async def list_tags():
        return {"tags": [{"label": t.label, "epc": t.epc}
                         for t in service.tags()]}

    @app.post("/api/tags")
    async def create_tag(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body is not valid JSON")
        label, epc = body.get("label"), body.get("epc")
        if not isinstance(label, str) or not isinstance(epc, str):
            return _error(422, "label and epc are required strings")
        try:
            tag = service.register_tag(label, epc)
        except RegistrationConflictError as exc:
            return _error(409, str(exc))
        except ValueError as exc:
            return _error(422, str(exc))
        return JSONResponse(status_code=201,
                            content={"label": tag.label, "epc": tag.epc})

    @app.delete("/api/tags/{label}")
    async def delete_tag(label: str):
        try:
            service.remove_tag(label)
        except KeyError:
            return _error(404, f"no tag labelled {label!r}")
        return Response(status_code=204)

    # -- config ------------------------------------------------------------

    @app.get("/api/config")
    async def get_config():
        cfg = service.session_config
        return {
            "schemaVersion": 1,
            "params": _params_to_wire(service.params),
            "portRoles": {str(p): r for p, r in service.port_roles.items()},
            "cooldownS": cfg.cooldown_s,
            "idleTimeoutS": cfg.idle_timeout_s,
        }

    @app.put("/api/config")
    async def put_config(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body is not valid JSON")
        if not isinstance(body, dict):
            return _error(422, "body must be an object")
        if "params" in body:
            if not isinstance(body["params"], dict):
                return _error(422, "params must be an object")
            try:
                params = _params_from_wire(body["params"])
            except (ValueError, TypeError) as exc:
                return _error(422, f"invalid params: {exc}")
            service.set_params(params)
        if "portRoles" in body:
            raw_roles = body["portRoles"]
            if not isinstance(raw_roles, dict):
                return _error(422, "portRoles must be an object")
            try:
                roles = {int(p): r for p, r in raw_roles.items()}
            except ValueError:
                return _error(422, "portRoles keys must be integers")
            if not all(r in _VALID_ROLES for r in roles.values()):
                return _error(422, f"roles must be one of {sorted(_VALID_ROLES)}")
            service.set_port_roles(roles)
        return await get_config()

    # -- trials ------------------------------------------------------------

    @app.get("/api/trials")
    async def get_trials(tag: Optional[str] = None,
                         limit: Optional[int] = None,
                         since: Optional[str] = None):
        if service.trial_log_path is None:
            return {"trials": []}
        epc = None
        if tag is not None:
            identity = next((t for t in service.tags() if t.label == tag), None)
            if identity is None:
                return _error(404, f"no tag labelled {tag!r}")
            epc = identity.epc
        since_dt = None
        if since is not None:
            try:
                since_dt = datetime.fromisoformat(since)
            except ValueError:
                return _error(422, "since must be an RFC 3339 timestamp")
        if limit is not None and limit < 1:
            return _error(422, "limit must be >= 1")
        trials = load_trials(service.trial_log_path, epc=epc,
                             since=since_dt, limit=limit)
        return {"trials": [t.to_wire() for t in trials]}

    # -- push channel ------------------------------------------------------

    @app.websocket("/ws/results")
    async def ws_results(ws: WebSocket):
        await ws.accept()
        sub = service.broadcaster.subscribe()
        last_pong = time.monotonic()
        last_beat = time.monotonic()

        async def receiver():
            nonlocal last_pong
            while True:
                await ws.receive_text()  # any client frame counts as a pong
                last_pong = time.monotonic()

        recv_task = asyncio.create_task(receiver())
        try:
            while True:
                if sub.dropped:
                    logger.warning("closing push channel: subscriber too slow")
                    break
                if time.monotonic() - last_pong > 2 * heartbeat_s + 1.0:
                    logger.warning("closing push channel: missed heartbeats")
                    break
                message = await asyncio.to_thread(sub.get, 0.1)
                if message is not None:
                    await ws.send_json(message)
                elif time.monotonic() - last_beat >= heartbeat_s:
                    await ws.send_json({"type": "heartbeat",
                                        "ts": time.time()})
                    last_beat = time.monotonic()
                if recv_task.done():
                    recv_task.result()  # surfaces WebSocketDisconnect
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            service.broadcaster.unsubscribe(sub)
            recv_task.cancel()
            try:
                await ws.close()
            except Exception:
                pass

    return app
