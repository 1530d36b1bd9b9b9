"""HTTP/JSON backend for the interactive editor.

Sessions hold a skull, the active tissue-depth models, the current control
values, and the current face latent. Adaptation runs as background jobs that
expose per-iteration loss snapshots for polling; requests within one session
are serialized by a per-session lock, and at most one job may be active per
session at a time.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .adaptation import AdaptationConfig, AdaptationResult, adapt_face
from .errors import CranioforgeError, RangeError, SchemaError
from .facemodel import (
    FaceLatent,
    MorphableFaceModel,
    decode,
    decode_landmarks,
    load_model,
    sample_prior,
)
from .landmarks import (
    LandmarkSchema,
    SkullLandmarkSet,
    default_schema,
    extend_landmarks,
)
from .mesh import obj_bytes
from .registration import apply_transform, estimate_similarity
from .tdd import (
    RegionalTddModel,
    TddModel,
    load_tdd_global,
    load_tdd_regional,
    sample_global,
    sample_regional,
)


class CreateSessionRequest(BaseModel):
    dataset_id: str | None = None
    skull: dict | None = None
    seed: int = 0
    attributes: dict[str, str] = {}


class ControlRequest(BaseModel):
    c: float | None = None
    region: str | None = None
    c_local: float | None = None


class AdaptRequest(BaseModel):
    config: dict = {}


@dataclass
class Job:
    id: str
    session_id: str
    state: str = "queued"  # queued | running | done | failed | cancelled
    iteration: int = 0
    total_iterations: int = 0
    latest_loss: tuple[float, float, float, float] | None = None
    loss_history: list[list[float]] = field(default_factory=list)
    error: str | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    thread: threading.Thread | None = None
    result: AdaptationResult | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "session_id": self.session_id,
                "state": self.state,
                "iteration": self.iteration,
                "total_iterations": self.total_iterations,
                "latest_loss": list(self.latest_loss) if self.latest_loss else None,
                "loss_history": [list(row) for row in self.loss_history],
                "error": self.error,
            }


@dataclass
class Session:
    id: str
    skull: SkullLandmarkSet
    latent: FaceLatent
    global_c: float = 0.0
    regional_c: dict[str, float] = field(default_factory=dict)
    active_job: str | None = None
    last_result: AdaptationResult | None = None
    lock: threading.RLock = field(default_factory=threading.RLock)


class EditorBackend:
    """Application state: the face and depth models plus live sessions/jobs."""

    def __init__(self, model: MorphableFaceModel, tdd: TddModel,
                 regional: RegionalTddModel, schema: LandmarkSchema | None = None,
                 dataset_root: Path | None = None):
        self.model = model
        self.tdd = tdd
        self.regional = regional
        self.schema = schema or default_schema()
        self.pairing = self.schema.pairing()
        self.dataset_root = Path(dataset_root) if dataset_root else None
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}
        self._registry_lock = threading.Lock()
        self._session_counter = itertools.count(1)
        self._job_counter = itertools.count(1)

    # -- session helpers ----------------------------------------------------

    def depths_for(self, session: Session):
        depths = sample_global(self.tdd, session.global_c)
        for region, c_local in session.regional_c.items():
            depths = sample_regional(self.regional, depths, region, c_local)
        return depths

    def control_ranges(self) -> dict:
        lo, hi = self.tdd.inflated_range()
        return {
            "global": [lo, hi],
            "regions": {
                name: list(self.regional.models[name].inflated_range())
                for name in self.regional.region_names
            },
        }

    def session_payload(self, session: Session) -> dict:
        depths = self.depths_for(session)
        facial = extend_landmarks(session.skull, depths)
        return {
            "id": session.id,
            "landmark_count": len(session.skull),
            "skull_landmarks": session.skull.positions.tolist(),
            "normals": session.skull.normals.tolist(),
            "depths": depths.depths.tolist(),
            "facial_landmarks": facial.positions.tolist(),
            "control": {"global_c": session.global_c,
                        "regional_c": dict(session.regional_c)},
            "ranges": self.control_ranges(),
            "active_job": session.active_job,
            "has_result": session.last_result is not None,
        }

    def load_dataset_skull(self, dataset_id: str) -> SkullLandmarkSet | None:
        if self.dataset_root is None:
            return None
        path = self.dataset_root / "pairs" / dataset_id / "skull_landmarks.json"
        if not path.exists():
            return None
        from .landmarks import load_skull_landmarks

        return load_skull_landmarks(path)

    def current_mesh(self, session: Session):
        """Current face, mapped into the skull's frame for display."""
        mesh = decode(self.model, session.latent)
        depths = self.depths_for(session)
        targets = extend_landmarks(session.skull, depths)
        transform = estimate_similarity(
            targets.positions, decode_landmarks(self.model, session.latent)
        )
        inv = transform.inverse()
        return mesh.with_vertices(apply_transform(inv, mesh.vertices))

    # -- job lifecycle --------------------------------------------------------

    def start_job(self, session: Session, config: AdaptationConfig) -> Job:
        job = Job(id=f"job{next(self._job_counter):04d}", session_id=session.id,
                  total_iterations=config.total_iterations)
        with self._registry_lock:
            self.jobs[job.id] = job

        depths = self.depths_for(session)
        targets = extend_landmarks(session.skull, depths)
        latent = session.latent

        def progress(iteration, losses):
            with job.lock:
                job.iteration = iteration
                job.latest_loss = losses
                job.loss_history.append([float(x) for x in losses])

        def run():
            with job.lock:
                job.state = "running"
            try:
                result = adapt_face(self.model, latent, targets, self.pairing,
                                    config, progress=progress,
                                    cancel=job.cancel_event)
            except Exception as err:  # surfaced through the job status
                with job.lock:
                    job.state = "failed"
                    job.error = str(err)
                with session.lock:
                    session.active_job = None
                return
            with session.lock:
                if result.cancelled:
                    with job.lock:
                        job.state = "cancelled"
                else:
                    session.latent = result.latent
                    session.last_result = result
                    with job.lock:
                        job.result = result
                        job.state = "done"
                session.active_job = None

        job.thread = threading.Thread(target=run, daemon=True)
        job.thread.start()
        return job


def _error_payload(code: str, message: str, detail=None) -> dict:
    return {"code": code, "message": message, "detail": detail}


def create_app(backend: EditorBackend) -> FastAPI:
    app = FastAPI(title="cranioforge editor service", version="0.1.0")
    app.state.backend = backend

    @app.exception_handler(CranioforgeError)
    async def _domain_error(request: Request, err: CranioforgeError):
        status = 422 if isinstance(err, RangeError) else 400
        detail = {"allowed": list(err.allowed)} if isinstance(err, RangeError) and err.allowed else None
        return JSONResponse(status_code=status,
                            content=_error_payload(type(err).__name__, str(err), detail))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(backend.sessions)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionRequest):
        if body.skull is not None:
            positions = np.asarray(body.skull.get("positions", []), dtype=float)
            normals = np.asarray(body.skull.get("normals", []), dtype=float)
            if positions.shape != (len(backend.schema), 3):
                return JSONResponse(
                    status_code=400,
                    content=_error_payload(
                        "SchemaError",
                        f"expected {len(backend.schema)} landmarks, "
                        f"got {0 if positions.ndim != 2 else positions.shape[0]}",
                    ),
                )
            skull = SkullLandmarkSet(positions=positions, normals=normals)
        elif body.dataset_id is not None:
            skull = backend.load_dataset_skull(body.dataset_id)
            if skull is None:
                return JSONResponse(
                    status_code=404,
                    content=_error_payload("NotFound",
                                           f"unknown dataset id {body.dataset_id!r}"),
                )
        else:
            return JSONResponse(
                status_code=400,
                content=_error_payload("SchemaError",
                                       "request needs 'skull' or 'dataset_id'"),
            )
        latent = sample_prior(backend.model, seed=body.seed,
                              attributes=body.attributes)
        with backend._registry_lock:
            session = Session(
                id=f"session{next(backend._session_counter):04d}",
                skull=skull, latent=latent,
            )
            backend.sessions[session.id] = session
        return backend.session_payload(session)

    def _get_session(session_id: str) -> Session | None:
        return backend.sessions.get(session_id)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = _get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", session_id))
        with session.lock:
            return backend.session_payload(session)

    @app.put("/sessions/{session_id}/control")
    def set_control(session_id: str, body: ControlRequest):
        session = _get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", session_id))
        with session.lock:
            if body.c is not None:
                lo, hi = backend.tdd.inflated_range()
                if not (lo <= body.c <= hi):
                    raise RangeError(f"C={body.c} outside [{lo}, {hi}]",
                                     allowed=(lo, hi))
                session.global_c = body.c
            elif body.region is not None and body.c_local is not None:
                # validates the region name and range
                sample_regional(backend.regional,
                                backend.depths_for(session), body.region,
                                body.c_local)
                session.regional_c[body.region] = body.c_local
            else:
                return JSONResponse(
                    status_code=400,
                    content=_error_payload("SchemaError",
                                           "control needs 'c' or 'region'+'c_local'"),
                )
            return backend.session_payload(session)

    @app.post("/sessions/{session_id}/adapt", status_code=202)
    def start_adaptation(session_id: str, body: AdaptRequest):
        session = _get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", session_id))
        with session.lock:
            if session.active_job is not None:
                return JSONResponse(
                    status_code=409,
                    content=_error_payload("JobActive",
                                           "an adaptation job is already running",
                                           {"job": session.active_job}),
                )
            fields = AdaptationConfig().to_json()
            fields.update(body.config)
            config = AdaptationConfig.from_json(fields)
            job = backend.start_job(session, config)
            session.active_job = job.id
        return {"job_id": job.id, "poll": f"/jobs/{job.id}"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = backend.jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", job_id))
        return job.snapshot()

    @app.delete("/jobs/{job_id}")
    def cancel_job(job_id: str):
        job = backend.jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", job_id))
        job.cancel_event.set()
        if job.thread is not None:
            job.thread.join(timeout=30.0)
        return job.snapshot()

    @app.get("/sessions/{session_id}/mesh")
    def get_mesh(session_id: str):
        session = _get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", session_id))
        with session.lock:
            mesh = backend.current_mesh(session)
        return Response(content=obj_bytes(mesh), media_type="model/obj")

    @app.get("/sessions/{session_id}/residuals")
    def get_residuals(session_id: str):
        session = _get_session(session_id)
        if session is None:
            return JSONResponse(status_code=404,
                                content=_error_payload("NotFound", session_id))
        with session.lock:
            if session.last_result is None:
                return {"landmark_residuals": None}
            return {
                "landmark_residuals": session.last_result.landmark_residuals.tolist(),
                "final_loss": list(session.last_result.final_loss),
            }

    return app


def create_app_from_paths(data_root) -> FastAPI:
    root = Path(data_root)
    backend = EditorBackend(
        model=load_model(root / "model"),
        tdd=load_tdd_global(root / "tdd" / "tdd_global.json"),
        regional=load_tdd_regional(root / "tdd" / "tdd_regional.json"),
        dataset_root=root,
    )
    return create_app(backend)
