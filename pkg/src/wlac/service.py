"""HTTP completion service over a loaded checkpoint.

JSON-over-HTTP with a versioned prefix:

* ``POST /v1/complete`` - ranked word completions for a typing state
* ``POST /v1/translate`` - full-sentence hypotheses (joint models only)
* ``GET  /v1/health``   - readiness, model id, uptime

Request text fields arrive as plain strings and are whitespace-tokenized
server-side with the checkpoint's vocabulary, so clients never deal with
tokenization.  Handlers share one immutable model snapshot; swapping in
a new checkpoint replaces the reference atomically between requests.
"""

from __future__ import annotations

import logging
import time
import uuid
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .checkpoint import load_checkpoint, read_config
from .datagen import WlacExample, typing_form
from .decoding import predict_topk, translate
from .model import CapabilityError, JointModel

logger = logging.getLogger(__name__)


class CompleteRequest(BaseModel):
    source: str
    left_context: str = ""
    right_context: str = ""
    typed: str = Field(min_length=1)
    k: int = Field(default=5, ge=1)


class TranslateRequest(BaseModel):
    source: str
    left_context: str = ""
    right_context: str = ""
    typed: str = Field(min_length=1)
    beams: int = Field(default=5, ge=1)


def _as_example(req: CompleteRequest | TranslateRequest) -> WlacExample:
    # Serving has no reference translation; label/full_target stay empty.
    return WlacExample(
        source=tuple(req.source.split()),
        left_context=tuple(req.left_context.split()),
        right_context=tuple(req.right_context.split()),
        typed=req.typed,
        label="",
        full_target=(),
        pair_id="request",
    )


class CompletionEngine:
    """One model snapshot plus the metadata the endpoints report."""

    def __init__(self, model: JointModel, model_id: str):
        model.eval()
        self.model = model
        self.model_id = model_id
        self.started = time.monotonic()
        self.ready = True

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "CompletionEngine":
        model = load_checkpoint(path)
        return cls(model, read_config(path)["model_id"])

    def swap(self, model: JointModel, model_id: str) -> None:
        model.eval()
        self.model, self.model_id = model, model_id  # atomic enough under one ref

    def complete(self, req: CompleteRequest) -> list[dict]:
        model = self.model
        with torch.inference_mode():
            preds = predict_topk(model, _as_example(req), req.k)
        out = []
        for word, score in preds.candidates:
            if typing_form(word, model.table).startswith(req.typed):
                out.append({"word": word, "score": score})
        return out

    def hypotheses(self, req: TranslateRequest) -> list[dict]:
        model = self.model
        with torch.inference_mode():
            hyps = translate(model, _as_example(req), beams=req.beams)
        return [
            {"tokens": list(tokens), "score": score}
            for tokens, score in hyps.hypotheses
        ]


def create_app(engine: CompletionEngine, allow_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="wlac completion service")
    if allow_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=allow_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        # Undecodable JSON is a malformed request (400); schema violations
        # on well-formed JSON are unprocessable content (422).
        if any(err.get("type") == "json_invalid" for err in exc.errors()):
            return JSONResponse(status_code=400, content={"error": "malformed-json"})
        return JSONResponse(
            status_code=422,
            content={"error": "invalid-request", "detail": exc.errors()},
        )

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex[:12]
        logger.exception("internal error %s", error_id)
        return JSONResponse(status_code=500, content={"error": "internal", "id": error_id})

    @app.post("/v1/complete")
    def complete(req: CompleteRequest):
        t0 = time.perf_counter()
        candidates = engine.complete(req)
        return {
            "candidates": candidates,
            "model_id": engine.model_id,
            "latency_ms": (time.perf_counter() - t0) * 1e3,
        }

    @app.post("/v1/translate")
    def do_translate(req: TranslateRequest):
        t0 = time.perf_counter()
        try:
            hyps = engine.hypotheses(req)
        except CapabilityError as exc:
            return JSONResponse(
                status_code=409, content={"error": "no-mt-decoder", "detail": str(exc)}
            )
        return {
            "hypotheses": hyps,
            "model_id": engine.model_id,
            "latency_ms": (time.perf_counter() - t0) * 1e3,
        }

    @app.get("/v1/health")
    def health():
        return {
            "status": "ready" if engine.ready else "loading",
            "model_id": engine.model_id,
            "uptime_s": time.monotonic() - engine.started,
        }

    return app


def serve(
    checkpoint: str | Path,
    host: str = "127.0.0.1",
    port: int = 8080,
    allow_origins: list[str] | None = None,
) -> None:
    """Load a checkpoint and block serving it (uvicorn handles graceful
    shutdown: in-flight requests drain on SIGTERM/SIGINT)."""
    import uvicorn

    engine = CompletionEngine.from_checkpoint(checkpoint)
    app = create_app(engine, allow_origins=allow_origins)
    uvicorn.run(app, host=host, port=port, log_level="warning")
