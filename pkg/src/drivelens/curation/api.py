"""HTTP surface for label curation.

Thin layer over ``ReviewStore``: JSON in, JSON out, store exceptions
mapped to status codes (404 unknown item, 409 stale lease, 410 missing
image file, 422 invalid submission with the violated rule names).
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..core import SceneLayer, layers_from_codes
from ..datastore import DatasetRecord, annotation_to_dict, gold_to_dict
from ..imageprep import RESOLUTION_LEVELS, load_image, resize
from .store import (
    InvalidReviewError,
    ReviewStore,
    ReviewSubmission,
    StaleLeaseError,
    UnknownItemError,
)


class CorrectedLabel(BaseModel):
    anomalous: bool
    layers: list[str] = Field(default_factory=list)


class ReviewBody(BaseModel):
    decision: Literal["accept", "correct"]
    reviewer: str
    corrected: CorrectedLabel | None = None
    descriptions: dict[str, str] | None = None
    note: str | None = None


def _item_payload(record: DatasetRecord, lease_seconds: float | None = None) -> dict:
    payload = {
        "id": record.item_id,
        "image_url": f"/api/items/{record.item_id}/image",
        "review": record.review_state.value,
        "gold": gold_to_dict(record.gold) if record.gold else None,
        "annotation": annotation_to_dict(record.annotation) if record.annotation else None,
        "error": record.error,
    }
    if lease_seconds is not None:
        payload["lease_seconds"] = lease_seconds
    return payload


def _submission_from_body(body: ReviewBody) -> ReviewSubmission:
    corrected_anomalous = None
    corrected_layers: frozenset[SceneLayer] | None = None
    if body.corrected is not None:
        corrected_anomalous = body.corrected.anomalous
        try:
            corrected_layers = layers_from_codes(body.corrected.layers)
        except ValueError as exc:
            raise HTTPException(
                status_code=422, detail={"error": str(exc), "rules": ["unknown_layer_code"]}
            ) from exc
    descriptions = None
    if body.descriptions is not None:
        try:
            descriptions = {
                SceneLayer.from_code(code): text for code, text in body.descriptions.items()
            }
        except ValueError as exc:
            raise HTTPException(
                status_code=422, detail={"error": str(exc), "rules": ["unknown_layer_code"]}
            ) from exc
    return ReviewSubmission(
        decision=body.decision,
        reviewer=body.reviewer,
        corrected_anomalous=corrected_anomalous,
        corrected_layers=corrected_layers,
        corrected_descriptions=descriptions,
        note=body.note,
    )


def create_app(store: ReviewStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="drivelens curation", docs_url=None, redoc_url=None)

    @app.get("/api/queue/next")
    def queue_next(reviewer: str = Query(min_length=1)) -> dict:
        record = store.next_for(reviewer)
        return {
            "item": None if record is None else _item_payload(record, store.lease_seconds),
            "progress": store.progress(),
        }

    @app.get("/api/progress")
    def progress() -> dict:
        return store.progress()

    @app.post("/api/items/{item_id}/review")
    def review(item_id: str, body: ReviewBody) -> dict:
        submission = _submission_from_body(body)
        try:
            updated = store.submit(item_id, submission)
        except UnknownItemError:
            raise HTTPException(status_code=404, detail={"error": f"unknown item {item_id!r}"})
        except StaleLeaseError as exc:
            raise HTTPException(status_code=409, detail={"error": str(exc)})
        except InvalidReviewError as exc:
            raise HTTPException(
                status_code=422,
                detail={"error": str(exc), "rules": [issue.rule for issue in exc.issues]},
            )
        return {"item": _item_payload(updated), "progress": store.progress()}

    @app.get("/api/items/{item_id}/image")
    def item_image(item_id: str, p: int | None = Query(default=None)) -> Response:
        try:
            record = store.get(item_id)
        except UnknownItemError:
            raise HTTPException(status_code=404, detail={"error": f"unknown item {item_id!r}"})
        path = Path(record.image_path)
        if not path.exists():
            raise HTTPException(
                status_code=410, detail={"error": f"image file missing: {record.image_path}"}
            )
        try:
            image = load_image(path, record.item_id)
        except ValueError as exc:
            raise HTTPException(status_code=410, detail={"error": str(exc)})
        if p is not None:
            if p not in tuple(int(lv) for lv in RESOLUTION_LEVELS):
                raise HTTPException(
                    status_code=422,
                    detail={"error": f"unsupported rendition level {p}", "rules": ["bad_level"]},
                )
            image = resize(image, p).image
        return Response(content=image.data, media_type=image.media_type)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
