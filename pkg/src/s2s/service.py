"""HTTP job service: upload a mesh, run the estimation pipeline, extract
threshold regions, download artifacts.

Jobs move queued -> running -> done|error with monotone progress; artifacts
(models, volumes, extracted meshes) live in id-named files under the
artifact directory, so completed outputs survive a restart. Errors are
JSON ``{"error": {"code": <http>, "message": <text>}}``.
"""

from __future__ import annotations

import json
import queue
import secrets
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import dataset as ds
from .errors import MeshParseError
from .geometry import export_mesh, load_volume, parse_mesh, save_volume
from .pipeline import estimate_volume, extract_region, to_model_units, voxels_above
from .training import load_generator

DEFAULT_UPLOAD_LIMIT = 64 * 1024 * 1024


@dataclass
class ServiceConfig:
    artifact_dir: Path
    checkpoint_dir: Path
    upload_limit: int = DEFAULT_UPLOAD_LIMIT
    workers: int = 1


@dataclass
class Job:
    id: str
    model_id: str
    axis: str
    resolution: int
    checkpoint: str
    state: str = "queued"  # queued -> running -> done | error
    progress: float = 0.0
    error: Optional[str] = None
    extractions: dict[float, dict] = field(default_factory=dict)


class JobParams(BaseModel):
    axis: str = "z"
    resolution: Optional[int] = None
    checkpoint: str = "default"


class ExtractParams(BaseModel):
    threshold: float


def _new_id() -> str:
    return secrets.token_hex(16)


class ServiceState:
    """Job/model/mesh tables plus the FIFO worker pool."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.lock = threading.Lock()
        self.models: dict[str, Path] = {}
        self.jobs: dict[str, Job] = {}
        self.meshes: dict[str, Path] = {}
        self.queue: "queue.Queue[Optional[str]]" = queue.Queue()
        self.threads: list[threading.Thread] = []
        root = Path(config.artifact_dir)
        self.models_dir = root / "models"
        self.volumes_dir = root / "volumes"
        self.meshes_dir = root / "meshes"
        for d in (self.models_dir, self.volumes_dir, self.meshes_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._restore()

    def _restore(self):
        for path in self.models_dir.iterdir():
            self.models[path.stem] = path
        for path in self.meshes_dir.glob("*.stl"):
            self.meshes[path.stem] = path
        for path in self.volumes_dir.glob("*.s2svol"):
            job_id = path.stem
            self.jobs[job_id] = Job(id=job_id, model_id="", axis="z",
                                    resolution=0, checkpoint="",
                                    state="done", progress=1.0)

    def start_workers(self):
        for _ in range(max(self.config.workers, 1)):
            t = threading.Thread(target=self._worker, daemon=True)
            t.start()
            self.threads.append(t)

    def stop_workers(self):
        for _ in self.threads:
            self.queue.put(None)
        for t in self.threads:
            t.join(timeout=10)
        self.threads.clear()

    def volume_path(self, job_id: str) -> Path:
        return self.volumes_dir / f"{job_id}.s2svol"

    def checkpoint_path(self, name: str) -> Path:
        return Path(self.config.checkpoint_dir) / name

    def _worker(self):
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            with self.lock:
                job = self.jobs[job_id]
                job.state = "running"
            try:
                self._run_job(job)
                with self.lock:
                    job.progress = 1.0
                    job.state = "done"
            except Exception as exc:
                with self.lock:
                    job.error = str(exc)
                    job.state = "error"

    def _run_job(self, job: Job):
        mesh = parse_mesh(self.models[job.model_id].read_bytes(), "auto")
        gen = load_generator(self.checkpoint_path(job.checkpoint))

        def on_progress(done, total):
            with self.lock:
                job.progress = max(job.progress, done / total)

        volume, transform = estimate_volume(mesh, gen, axis=job.axis,
                                            resolution=job.resolution,
                                            progress=on_progress)
        volume = to_model_units(volume, transform)
        save_volume(self.volume_path(job.id), volume)


def _http_error(status: int, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail=message)


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state.start_workers()
        yield
        state.stop_workers()

    app = FastAPI(lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(HTTPException)
    async def on_http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": {"code": exc.status_code, "message": str(exc.detail)}},
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": {"code": 422, "message": str(exc.errors())}},
        )

    @app.post("/api/models", status_code=201)
    async def create_model(request: Request, format: str = "auto"):
        declared = request.headers.get("content-length")
        if declared and int(declared) > config.upload_limit:
            raise _http_error(413, f"upload exceeds {config.upload_limit} bytes")
        body = await request.body()
        if len(body) > config.upload_limit:
            raise _http_error(413, f"upload exceeds {config.upload_limit} bytes")
        if format not in ("obj", "stl", "stl_ascii", "stl_binary", "auto"):
            raise _http_error(422, f"unknown mesh format {format!r}")
        try:
            parse_mesh(body, format)  # eager validation; id implies parseable
        except MeshParseError as exc:
            raise _http_error(422, str(exc)) from None
        model_id = _new_id()
        path = state.models_dir / model_id
        path.write_bytes(body)
        with state.lock:
            state.models[model_id] = path
        return {"model_id": model_id}

    @app.post("/api/models/{model_id}/jobs", status_code=202)
    async def create_job(model_id: str, params: JobParams):
        with state.lock:
            if model_id not in state.models:
                raise _http_error(404, f"unknown model {model_id}")
        ckpt = state.checkpoint_path(params.checkpoint)
        meta_file = (ckpt / "meta.json") if ckpt.is_dir() else None
        if meta_file is None or not meta_file.exists():
            raise _http_error(404, f"unknown checkpoint {params.checkpoint!r}")
        meta = json.loads(meta_file.read_text())
        resolution = params.resolution or meta["resolution"]
        if resolution != meta["resolution"]:
            raise _http_error(
                422,
                f"checkpoint {params.checkpoint!r} is trained at "
                f"{meta['resolution']}, got resolution {resolution}",
            )
        if params.axis not in ("x", "y", "z"):
            raise _http_error(422, f"axis must be x, y or z, got {params.axis!r}")
        job = Job(id=_new_id(), model_id=model_id, axis=params.axis,
                  resolution=resolution, checkpoint=params.checkpoint)
        with state.lock:
            state.jobs[job.id] = job
        state.queue.put(job.id)
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    async def get_job(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise _http_error(404, f"unknown job {job_id}")
            return {"state": job.state, "progress": job.progress, "error": job.error}

    @app.get("/api/jobs/{job_id}/slices/{k}")
    async def get_slice(job_id: str, k: int):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise _http_error(404, f"unknown job {job_id}")
            if job.state != "done":
                raise _http_error(409, f"job is {job.state}, not done")
        volume = load_volume(state.volume_path(job_id))
        nz = volume.values.shape[0]
        if not 0 <= k < nz:
            raise _http_error(422, f"slice index {k} out of range [0, {nz})")
        return Response(content=ds.pgm_bytes(volume.plane(k)),
                        media_type="image/x-portable-graymap")

    @app.post("/api/jobs/{job_id}/extract")
    async def extract(job_id: str, params: ExtractParams):
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise _http_error(404, f"unknown job {job_id}")
            if job.state != "done":
                raise _http_error(409, f"job is {job.state}, not done")
            cached = job.extractions.get(params.threshold)
        if not 0.0 < params.threshold < 1.0:
            raise _http_error(422, f"threshold must be in (0, 1), got {params.threshold}")
        if cached is not None:
            return cached
        volume = load_volume(state.volume_path(job_id))
        mesh = extract_region(volume, params.threshold)
        mesh_id = _new_id()
        path = state.meshes_dir / f"{mesh_id}.stl"
        path.write_bytes(export_mesh(mesh, "stl_binary"))
        result = {"mesh_id": mesh_id,
                  "voxels_above": voxels_above(volume, params.threshold),
                  "triangles": len(mesh.triangles)}
        with state.lock:
            state.meshes[mesh_id] = path
            job.extractions[params.threshold] = result
        return result

    @app.get("/api/meshes/{mesh_id}")
    async def get_mesh(mesh_id: str, format: str = "stl"):
        with state.lock:
            path = state.meshes.get(mesh_id)
        if path is None:
            raise _http_error(404, f"unknown mesh {mesh_id}")
        if format not in ("stl", "obj"):
            raise _http_error(422, f"format must be stl or obj, got {format!r}")
        blob = path.read_bytes()
        if format == "obj":
            try:
                blob = export_mesh(parse_mesh(blob, "stl_binary"), "obj")
            except MeshParseError:
                blob = b""  # an extraction above every voxel is a valid empty mesh
        return Response(content=blob, media_type="application/octet-stream")

    return app


def run_server(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8080):
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port)
