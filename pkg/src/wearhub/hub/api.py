"""HTTP control surface: session lifecycle, status, live events, export.

A thin layer over HubServer/SessionManager; every handler is async so it
runs on the hub event loop and state transitions stay serialized.  The
event stream is server-sent events with one LiveStatus object per second.
"""

from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .. import analysis
from ..store import SessionNotFinalized, StoreError, UnknownSession
from .server import HubServer
from .state import HubError

log = logging.getLogger(__name__)

EVENT_PERIOD_S = 1.0


def build_app(server: HubServer, export_root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="wearhub control API", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    manager = server.manager
    export_root = Path(export_root)

    @app.exception_handler(HubError)
    async def hub_error(_req: Request, exc: HubError):
        return JSONResponse(status_code=409, content={"error": exc.code, "detail": exc.detail})

    @app.exception_handler(UnknownSession)
    async def unknown_session(_req: Request, exc: UnknownSession):
        return JSONResponse(status_code=404, content={"error": "unknown_session", "detail": str(exc)})

    @app.exception_handler(SessionNotFinalized)
    async def not_finalized(_req: Request, exc: SessionNotFinalized):
        return JSONResponse(status_code=409, content={"error": "not_ready", "detail": str(exc)})

    @app.exception_handler(StoreError)
    async def store_error(_req: Request, exc: StoreError):
        return JSONResponse(status_code=500, content={"error": "store_error", "detail": str(exc)})

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json() if await _has_body(request) else {}
        meta = server.create_session(
            str(body.get("title", "")), str(body.get("description", ""))
        )
        return meta

    @app.get("/sessions")
    async def list_sessions():
        return manager.store.list_sessions()

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return manager.store.get_session(session_id)

    @app.post("/sessions/{session_id}/start")
    async def start_session(session_id: str):
        return await server.start_session(session_id)

    @app.post("/sessions/{session_id}/stop")
    async def stop_session(session_id: str):
        return await server.stop_session(session_id)

    @app.get("/sessions/{session_id}/export")
    async def export_session(session_id: str):
        bundle = manager.store.export_csv(session_id, export_root)
        meta = manager.store.get_session(session_id)
        protocol = analysis.protocol_from_config(analysis.session_config(meta))
        analysis.write_merged_csv(
            bundle / "chest_hr.csv",
            bundle / "watch_hr.csv",
            meta,
            bundle / "merged_hr.csv",
            protocol,
        )
        files = sorted(f.name for f in bundle.iterdir())
        return {"session_id": session_id, "dir": str(bundle), "files": files}

    @app.get("/sessions/{session_id}/export/files/{name}")
    async def export_file(session_id: str, name: str):
        manager.store.get_session(session_id)  # 404 on unknown id
        path = export_root / session_id / name
        if "/" in name or "\\" in name or ".." in name or not path.is_file():
            return JSONResponse(
                status_code=404,
                content={"error": "unknown_file", "detail": f"no exported file {name!r}"},
            )
        return PlainTextResponse(path.read_text(encoding="utf-8"), media_type="text/csv")

    @app.get("/status")
    async def status():
        return manager.status()

    @app.get("/counters")
    async def counters():
        return manager.counters_snapshot()

    @app.get("/events")
    async def events(limit: int | None = None):
        # limit bounds the stream (handy for curl and tests); browsers omit it
        async def stream():
            yield f"retry: {int(EVENT_PERIOD_S * 2000)}\n\n"
            sent = 0
            while limit is None or sent < limit:
                yield f"data: {json.dumps(manager.status())}\n\n"
                sent += 1
                if limit is None or sent < limit:
                    await asyncio.sleep(EVENT_PERIOD_S)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


async def _has_body(request: Request) -> bool:
    body = await request.body()
    return bool(body)


async def serve_api(app: FastAPI, host: str, port: int) -> tuple[asyncio.Task, "uvicorn.Server"]:
    """Run uvicorn on the current loop; returns (task, server) for shutdown."""
    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level="warning", access_log=False)
    server = uvicorn.Server(config)
    task = asyncio.create_task(server.serve())
    while not server.started and not task.done():
        await asyncio.sleep(0.02)
    if task.done():
        task.result()  # propagate startup failure
    return task, server
