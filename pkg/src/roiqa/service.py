"""HTTP JSON API for the annotation protocol, plus static hosting for the
annotator web client.

Endpoints:
  GET  /api/tasks/next?annotator=ID  next unrated ROI for this annotator
  GET  /api/rois/{id}                image bytes (base64 PNG) + RLE mask + scales
  POST /api/ratings                  submit a RatingRecord
  GET  /api/progress                 per-ROI rater counts
  GET  /api/export                   finalized labels as JSON-lines

Status codes: 400 validation, 404 unknown ids, 409 finalized-ROI resubmission.
"""

from __future__ import annotations

import base64
import json
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .aggregation import AnnotationStore, RatingRecord
from .core import (
    IMPORTANCE_CATEGORIES,
    QUALITY_CATEGORIES,
    SEVERITY_CATEGORIES,
    DISTORTION_TYPES,
)

SCALE_DEFINITIONS = {
    "distortion_levels": list(SEVERITY_CATEGORIES) + ["Non-existent"],
    "quality_levels": list(QUALITY_CATEGORIES),
    "importance_levels": list(IMPORTANCE_CATEGORIES),
    "distortion_types": [dt.value for dt in DISTORTION_TYPES],
}


def create_app(store: AnnotationStore, ui_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="roiqa annotation service")

    @app.get("/api/tasks/next")
    def next_task(annotator: Optional[str] = Query(default=None)):
        if not annotator:
            return JSONResponse({"error": "annotator query parameter is required"}, status_code=400)
        task = store.next_task(annotator)
        if task is None:
            return {"task": None}
        return {"task": task.to_json_dict()}

    @app.get("/api/rois/{roi_id}")
    def get_roi(roi_id: str):
        task = store.tasks.get(roi_id)
        if task is None:
            return JSONResponse({"error": f"unknown roi_id {roi_id!r}"}, status_code=404)
        try:
            png = Path(task.image_path).read_bytes()
        except OSError:
            return JSONResponse({"error": "image file unavailable"}, status_code=404)
        return {
            "roi_id": roi_id,
            "image_png_base64": base64.b64encode(png).decode("ascii"),
            "mask_rle": task.mask_rle,
            "scales": SCALE_DEFINITIONS,
        }

    @app.post("/api/ratings")
    async def post_rating(request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse({"error": "invalid JSON body"}, status_code=400)
        required = {"roi_id", "annotator_id", "distortions", "quality", "importance"}
        missing = required - set(body)
        if missing or not isinstance(body.get("distortions"), dict):
            return JSONResponse(
                {"error": f"missing or malformed fields: {sorted(missing) or 'distortions'}"},
                status_code=400,
            )
        rec = RatingRecord(
            roi_id=body["roi_id"],
            annotator_id=body["annotator_id"],
            distortions=body["distortions"],
            quality=body["quality"],
            importance=body["importance"],
            timestamp=float(body.get("timestamp", time.time())),
        )
        try:
            ack = store.submit(rec)
        except ValueError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        except KeyError as e:
            return JSONResponse({"error": str(e.args[0])}, status_code=404)
        except PermissionError as e:
            return JSONResponse({"error": str(e)}, status_code=409)
        return ack

    @app.get("/api/progress")
    def progress():
        return store.progress()

    @app.get("/api/export")
    def export():
        lines = [json.dumps(r.to_json_dict(), ensure_ascii=False) for r in store.export_labels()]
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""),
                                 media_type="application/jsonl")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(store: AnnotationStore, port: int, ui_dir: Optional[str | Path] = None) -> None:
    """Run the service; port 0 binds an ephemeral port and prints it."""
    import socket

    import uvicorn

    app = create_app(store, ui_dir=ui_dir)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(("127.0.0.1", port))
    actual_port = sock.getsockname()[1]
    print(json.dumps({"serving": True, "port": actual_port}), flush=True)
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
