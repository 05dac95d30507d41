"""HTTP facade over the engine: JSON routes plus a resumable event stream.

The API is a pure adapter — every response is derived from engine state and
no business rules live here. Generation endpoints return 202 immediately;
results arrive over the per-project event stream or by polling the node.
"""

from __future__ import annotations

import base64
import json
import queue
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .engine import PipelineEngine
from .errors import (
    BackendError,
    IllegalStateError,
    InvalidInputError,
    SakugaError,
    UnknownIdError,
)
from .model import GenerationParams, MaskRegion

# Closed set of machine-readable error codes surfaced by this API.
ERROR_CODES = frozenset(
    {
        "invalid_request",
        "not_found",
        "illegal_state",
        "already_pending",
        "already_completed",
        "not_completed",
        "no_next_stage",
        "backend_down",
        "capability_missing",
        "log_corrupt",
    }
)

_STATUS_BY_TYPE = [
    (UnknownIdError, 404),
    (InvalidInputError, 400),
    (IllegalStateError, 409),
    (BackendError, 503),
    (SakugaError, 500),
]


def _error_response(exc: SakugaError) -> JSONResponse:
    code = exc.code if exc.code in ERROR_CODES else "illegal_state"
    status = next(s for t, s in _STATUS_BY_TYPE if isinstance(exc, t))
    return JSONResponse(
        status_code=status, content={"code": code, "message": str(exc), "details": None}
    )


class CreateProjectBody(BaseModel):
    theme: str
    width: int = 512
    height: int = 512
    seed: Optional[int] = None


class AdvanceBody(BaseModel):
    prompt_delta: str = ""
    seed: Optional[int] = None


class RegenerateBody(BaseModel):
    prompt: Optional[str] = None
    seed: Optional[int] = None
    params: Optional[dict] = None


class InpaintBody(BaseModel):
    mask_b64: str
    prompt: str = ""


class ActivateBody(BaseModel):
    node_id: str


class AskBody(BaseModel):
    node_id: str
    question: str


def format_sse(record) -> str:
    return f"id: {record.seq}\nevent: {record.kind}\ndata: {json.dumps(record.to_doc())}\n\n"


def create_app(
    engine: PipelineEngine,
    cors_origins: tuple = ("*",),
    frontend_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="sakugaflow", docs_url=None, redoc_url=None)
    app.state.engine = engine
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(SakugaError)
    async def handle_sakuga_error(request: Request, exc: SakugaError):
        return _error_response(exc)

    @app.post("/v1/projects", status_code=201)
    def create_project(body: CreateProjectBody):
        project = engine.create_project(
            body.theme, width=body.width, height=body.height, seed=body.seed
        )
        return project.to_doc()

    @app.get("/v1/projects/{project_id}")
    def get_project(project_id: str):
        return engine.get_project(project_id).to_doc()

    @app.get("/v1/projects/{project_id}/tree")
    def get_tree(project_id: str):
        return engine.export_tree(project_id)

    @app.get("/v1/nodes/{node_id}")
    def get_node(node_id: str):
        return engine.get_node(node_id).to_doc()

    @app.post("/v1/nodes/{node_id}/generate", status_code=202)
    def generate(node_id: str):
        job = engine.generate(node_id)
        return job.to_doc()

    @app.post("/v1/nodes/{node_id}/advance", status_code=201)
    def advance(node_id: str, body: AdvanceBody):
        node = engine.advance_stage(node_id, body.prompt_delta, seed=body.seed)
        return node.to_doc()

    @app.post("/v1/nodes/{node_id}/regenerate", status_code=201)
    def regenerate(node_id: str, body: RegenerateBody):
        params = GenerationParams.from_doc(body.params) if body.params else None
        node = engine.regenerate(
            node_id, new_prompt=body.prompt, new_seed=body.seed, new_params=params
        )
        return node.to_doc()

    @app.post("/v1/nodes/{node_id}/inpaint", status_code=201)
    def inpaint(node_id: str, body: InpaintBody):
        try:
            mask_png = base64.b64decode(body.mask_b64)
        except ValueError:
            raise InvalidInputError("mask_b64 is not valid base64")
        mask = MaskRegion.from_png(mask_png)
        node = engine.inpaint(node_id, mask, body.prompt)
        return node.to_doc()

    @app.post("/v1/nodes/{node_id}/control", status_code=201)
    async def attach_control(node_id: str, image: UploadFile):
        data = await image.read()
        node = engine.attach_control_image(node_id, data)
        return node.to_doc()

    @app.post("/v1/projects/{project_id}/activate")
    def activate(project_id: str, body: ActivateBody):
        return engine.activate(project_id, body.node_id).to_doc()

    @app.get("/v1/compare")
    def compare(a: str, b: str):
        return engine.compare(a, b).to_doc()

    @app.post("/v1/tutor/ask", status_code=201)
    def tutor_ask(body: AskBody):
        return engine.ask_tutor(body.node_id, body.question)

    @app.get("/v1/blobs/{digest}")
    def get_blob(digest: str):
        data = engine.get_blob(digest)
        return Response(content=data, media_type="image/png")

    @app.get("/v1/projects/{project_id}/events")
    def events(project_id: str, request: Request, live: int = 1):
        header = request.headers.get("last-event-seq") or request.headers.get(
            "last-event-id"
        )
        try:
            after = int(header) if header is not None else -1
        except ValueError:
            raise InvalidInputError("Last-Event-Seq must be an integer")
        engine.get_project(project_id)  # 404 before streaming starts

        def stream():
            sub: Optional[queue.Queue] = engine.subscribe(project_id) if live else None
            try:
                last = after
                for record in engine.events_since(project_id, after_seq=after):
                    yield format_sse(record)
                    last = record.seq
                if sub is None:
                    return
                while True:
                    try:
                        record = sub.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if record.seq <= last:
                        continue
                    yield format_sse(record)
                    last = record.seq
            finally:
                if sub is not None:
                    engine.unsubscribe(project_id, sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
