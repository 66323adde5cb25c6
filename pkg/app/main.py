# -*- coding: utf-8 -*-
"""
FastAPI-Report-Service für Checkpoints, Trainingsläufe und Merkmalsbilder.

Liefert das maschinenlesbare Gegenstück zu `inspect` und `train` der Kommandozeile.
Gestartet wird er über `python -m app.cli serve` oder direkt mit `python -m app.main`.
"""

import asyncio
import os

import uvicorn
from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import Response

from app.errors import DataIOError
from app.helpers.image_helpers import render_feature_png
from app.services.experiment_service import inspect_checkpoint, load_cached_feature, read_metrics

app = FastAPI(title="BC-ResNet-ASC Report Service")


@app.get("/health")
async def health():
    return {"status": "ok"}


@app.post("/api/inspect")
async def api_inspect(file: UploadFile = File(...)):
    """
    Nimmt einen .bcra-Checkpoint entgegen und liefert Parameter-Tabelle, rezeptives Feld,
    Stufenformen und Grössenbericht.
    """
    content = await file.read()
    try:
        return await asyncio.to_thread(inspect_checkpoint, content)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except Exception as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


@app.get("/api/runs/{run_id}/metrics")
async def api_run_metrics(run_id: str):
    """Gibt das Metrik-Log (eine Zeile je Epoche) eines Laufs unter BCRA_RUNS_DIR zurück."""
    try:
        metrics = await asyncio.to_thread(read_metrics, run_id)
    except DataIOError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return {"run_id": run_id, "epochs": metrics}


@app.get("/api/features/{feature_id}/image")
async def api_feature_image(feature_id: str, cache: str = "data.bcaf"):
    """Rendert eine gecachte Log-Mel-Karte als PNG."""
    try:
        features = await asyncio.to_thread(load_cached_feature, feature_id, cache)
    except DataIOError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return Response(content=render_feature_png(features), media_type="image/png")


def serve(port: int | None = None) -> None:
    port = port if port is not None else int(os.environ.get("PORT", 8000))
    uvicorn.run(app, host="0.0.0.0", port=port)


if __name__ == "__main__":
    serve()
