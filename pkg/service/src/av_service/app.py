"""HTTP service: POST /classify scores question/answer pairs, GET /health.

Wire contract (shared with the pipeline's remote-classifier client):

    POST /classify {"pairs": [{"question": str, "answer": str}, ...],
                    "model_id": optional str}
    -> {"scores": [float in 0..1, ...], "model_id": str, "latency_ms": int}

Scores come back in request order. Errors: 400 for schema violations,
413 for batches over 256 pairs, 503 while the model is loading.
"""

from __future__ import annotations

import argparse
import logging
import os
import threading
import time

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .scoring import EchoBackend, TransformerBackend

logger = logging.getLogger(__name__)

BATCH_CAP = 256

ECHO = "echo-heuristic"
TRANSFORMER = "transformer"


class PairIn(BaseModel):
    question: str
    answer: str


class ClassifyRequest(BaseModel):
    pairs: list[PairIn] = Field(min_length=1)
    model_id: str | None = None


class ClassifyResponse(BaseModel):
    scores: list[float]
    model_id: str
    latency_ms: int


def create_app(
    mode: str = ECHO,
    checkpoint: str | None = None,
    batch_cap: int = BATCH_CAP,
    preload: bool = True,
) -> FastAPI:
    if mode == ECHO:
        backend = EchoBackend()
    elif mode == TRANSFORMER:
        if not checkpoint:
            raise ValueError("transformer mode needs a checkpoint path")
        backend = TransformerBackend(checkpoint)
        if preload:
            threading.Thread(target=_safe_load, args=(backend,), daemon=True).start()
    else:
        raise ValueError(f"unknown mode {mode!r}")

    app = FastAPI(title="answer-validation classifier", version="0.1.0")
    app.state.backend = backend

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    def health():
        if not backend.ready():
            raise HTTPException(status_code=503, detail="model loading")
        return {"status": "ok", "model_id": backend.model_id}

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest):
        if len(request.pairs) > batch_cap:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.pairs)} exceeds cap {batch_cap}",
            )
        if not backend.ready():
            raise HTTPException(status_code=503, detail="model loading")
        started = time.perf_counter()
        scores = backend.score_batch([(p.question, p.answer) for p in request.pairs])
        # echo responses are a pure function of the request; keep them that way
        latency = (
            0
            if isinstance(backend, EchoBackend)
            else int((time.perf_counter() - started) * 1000)
        )
        return ClassifyResponse(
            scores=scores, model_id=backend.model_id, latency_ms=latency
        )

    return app


def _safe_load(backend: TransformerBackend) -> None:
    try:
        backend.load()
    except Exception:
        pass  # /health keeps returning 503; the error is already logged


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kgqa-av-service")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--mode", choices=[ECHO, TRANSFORMER], default=ECHO)
    parser.add_argument(
        "--checkpoint",
        default=os.environ.get("AV_SERVICE_CHECKPOINT"),
        help="pair-classification checkpoint directory (transformer mode)",
    )
    args = parser.parse_args(argv)

    import uvicorn

    app = create_app(mode=args.mode, checkpoint=args.checkpoint)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
