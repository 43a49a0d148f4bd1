"""HTTP front for the annotation service.

JSON API consumed by the browser UI; the UI bundle itself is served as
static files at /. Every failure returns {"error": {code, message}}
with a matching status code.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import AnnotationScore, AnnotationService
from .errors import (
    AlreadyReviewed,
    EmptyBenchmark,
    ExclusionNotAllowed,
    InvalidValue,
    MikoError,
    NotEligible,
    UnknownAnnotator,
    UnknownTask,
)

_STATUS = {
    UnknownAnnotator: 403,
    InvalidValue: 400,
    ExclusionNotAllowed: 400,
    UnknownTask: 404,
    NotEligible: 409,
    AlreadyReviewed: 409,
    EmptyBenchmark: 409,
}


class ScoreBody(BaseModel):
    post_id: str
    relation: str
    annotator_id: str
    value: int


class DecisionBody(BaseModel):
    post_id: str
    decision: str
    reviewer_id: str
    excluded_relations: list[str] | None = None


def create_app(service: AnnotationService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="intention annotation", docs_url=None, redoc_url=None)

    @app.exception_handler(MikoError)
    async def miko_error_handler(_: Request, exc: MikoError):
        status = _STATUS.get(type(exc), 400)
        return JSONResponse(
            status_code=status,
            content={"error": {"code": type(exc).__name__, "message": str(exc)}},
        )

    @app.get("/api/tasks/next")
    def next_task(annotator: str):
        task = service.next_task(annotator)
        progress = service.progress(annotator)
        if task is None:
            return {"done": True, "progress": progress}
        return {"done": False, "task": task, "progress": progress}

    @app.post("/api/scores")
    def submit_score(body: ScoreBody):
        service.submit_score(AnnotationScore(
            post_id=body.post_id,
            relation=body.relation,
            annotator_id=body.annotator_id,
            value=body.value,
        ))
        return {"ok": True}

    @app.get("/api/aggregates")
    def aggregates():
        return {"aggregates": [agg.to_json() for agg in service.aggregate()]}

    @app.get("/api/review/queue")
    def review_queue():
        return {"queue": [agg.to_json() for agg in service.review_queue()]}

    @app.post("/api/review/decision")
    def review_decision(body: DecisionBody):
        service.review_decision(
            body.post_id, body.decision, body.reviewer_id,
            body.excluded_relations or [],
        )
        return {"ok": True}

    @app.get("/api/benchmark/manifest")
    def benchmark_manifest():
        return service.benchmark_manifest()

    if static_dir:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
