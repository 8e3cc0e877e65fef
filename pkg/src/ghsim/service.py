"""HTTP service for remote monitoring and control.

Routes (all JSON unless noted, all under /api, bearer-token auth):

    POST /api/login              -> token
    GET  /api/status             -> composite snapshot incl. process schematic
    GET  /api/events?limit=10    -> newest-first event feed
    POST /api/command            -> enqueue a PLC/actuator/params command
    GET  /api/params             -> active controller parameters
    PUT  /api/params             -> partial update, applied at the next scan
    GET  /api/export?from&to&node&kind -> CSV download
    POST /api/sim                -> pause / resume / speed (playback only)

Everything that mutates goes through the simulation's serialized command
queue; reads come from snapshots taken under the host lock. A static
frontend directory can be mounted at / when present.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Response

from . import schemas
from .auth import BadCredentials, SessionManager, Throttled
from .gateway import ExportRangeError
from .runner import SimHost


def parse_time(value: str, epoch: datetime) -> float:
    """Accept raw sim seconds or an ISO-8601 UTC instant."""
    try:
        return float(value)
    except ValueError:
        pass
    try:
        dt = datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    except ValueError:
        raise HTTPException(400, f"bad time {value!r}: want seconds or YYYY-MM-DDTHH:MM:SSZ")
    return (dt - epoch).total_seconds()


def create_app(host: SimHost, sessions: SessionManager, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="ghsim operator service", version="0.1.0")
    app.state.host = host
    app.state.sessions = sessions

    def require_session(authorization: str | None = Header(default=None)):
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        session = sessions.validate(token)
        if session is None:
            raise HTTPException(401, "missing, invalid or expired token")
        return session

    @app.post("/api/login", response_model=schemas.LoginResponse)
    def login(body: schemas.LoginRequest):
        try:
            session = sessions.login(body.username, body.password)
        except Throttled as exc:
            raise HTTPException(429, str(exc))
        except BadCredentials as exc:
            raise HTTPException(401, str(exc))
        return schemas.LoginResponse(token=session.token,
                                     expires_in=session.expires - sessions._now(),
                                     role=session.role)

    @app.get("/api/status")
    def status(session=Depends(require_session)) -> dict:
        return host.status()

    @app.get("/api/events", response_model=schemas.EventsResponse)
    def events(limit: int = Query(default=10, ge=0, le=1000),
               session=Depends(require_session)):
        clock = host.world.clock
        out = [
            schemas.EventOut(timestamp=e.timestamp, time=clock.iso(e.timestamp),
                             severity=e.severity, source=e.source, message=e.message)
            for e in host.recent_events(limit)
        ]
        return schemas.EventsResponse(events=out)

    @app.post("/api/command", response_model=schemas.CommandResult)
    def command(body: schemas.CommandBody, session=Depends(require_session)):
        ticket = host.post_command(body.target, body.action, body.args,
                                   issued_by=session.user)
        if not ticket.done.is_set():
            return schemas.CommandResult(accepted=None, reason="pending")
        return schemas.CommandResult(accepted=ticket.accepted, reason=ticket.reason)

    @app.get("/api/params", response_model=schemas.ParamsModel)
    def get_params(session=Depends(require_session)):
        return schemas.ParamsModel(**{
            k: v for k, v in host.get_params().items()
            if k in schemas.ParamsModel.model_fields
        })

    @app.put("/api/params", response_model=schemas.ParamsModel)
    def put_params(body: schemas.ParamsUpdate, session=Depends(require_session)):
        changes = body.changes()
        if changes:
            ticket = host.post_command("params", "update", changes, issued_by=session.user)
            if not ticket.done.is_set():
                raise HTTPException(409, "simulation paused; parameter change pending")
            if not ticket.accepted:
                raise HTTPException(400, ticket.reason or "rejected")
        return get_params(session)

    @app.get("/api/export")
    def export(session=Depends(require_session),
               from_: str | None = Query(default=None, alias="from"),
               to: str | None = Query(default=None),
               node: int | None = Query(default=None),
               kind: str | None = Query(default=None)):
        clock = host.world.clock
        lo = parse_time(from_, clock.epoch) if from_ is not None else 0.0
        hi = parse_time(to, clock.epoch) if to is not None else clock.now
        try:
            csv = host.export_csv(lo, hi, node, kind)
        except ExportRangeError as exc:
            raise HTTPException(400, str(exc))
        return Response(csv, media_type="text/csv",
                        headers={"Content-Disposition": "attachment; filename=export.csv"})

    @app.post("/api/sim", response_model=schemas.SimControlResult)
    def sim_control(body: schemas.SimControlBody, session=Depends(require_session)):
        try:
            state = host.sim_control(body.action, body.value)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return schemas.SimControlResult(**state)

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
