"""HTTP service exposing the inpainting workflow: upload an image, define a
region, run training jobs in the background, stream progress, resample
inpaints and export results.

Jobs run on their own threads and publish immutable snapshots; any number of
subscribers can replay the event sequence of a job.  Sessions and bundles
persist under a data directory so a restarted service restores them
byte-exactly.
"""

from __future__ import annotations

import io
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import StreamingResponse

from . import __version__
from .bundles import METHOD_GOPT, ModelBundle, bundle_digest, load_bundle, save_bundle
from .config import TrainingConfig, ZOptConfig
from .images import (
    Micrograph,
    PolygonRegion,
    Rect,
    RectRegion,
    Region,
    load_micrograph,
    region_from_json,
    render_uint8,
    save_png,
    validate_region,
)
from .results import InpaintResult
from .seedopt import evaluate_zopt, optimize_seed
from .training import TrainStep, evaluate_gopt, train_gopt, train_wgan

API_VERSION = 1

JOB_GOPT = "gopt"
JOB_ZOPT_TRAIN = "zopt_train"
JOB_ZOPT_OPTIMIZE = "zopt_optimize"

QUEUED = "queued"
RUNNING = "running"
CANCELLING = "cancelling"
DONE = "done"
FAILED = "failed"
PARTIAL = "partial"

_TRANSITIONS = {
    QUEUED: {RUNNING},
    RUNNING: {CANCELLING, DONE, FAILED, PARTIAL},
    CANCELLING: {DONE, FAILED, PARTIAL},
    DONE: set(),
    FAILED: set(),
    PARTIAL: set(),
}


def _png_bytes(m: Micrograph) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(render_uint8(m)).save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class Job:
    id: str
    session_id: str
    method: str
    config: dict
    region_index: int | None
    state: str = QUEUED
    error: str | None = None
    bundle_id: str | None = None
    result_id: str | None = None
    snapshots: list[dict] = field(default_factory=list)
    preview_png: bytes | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    cond: threading.Condition = field(default_factory=threading.Condition)
    thread: threading.Thread | None = None
    last_iteration: int = -1

    def transition(self, state: str) -> None:
        with self.cond:
            if state not in _TRANSITIONS[self.state]:
                raise RuntimeError(f"illegal job transition {self.state} -> {state}")
            self.state = state
            self.cond.notify_all()

    def publish(self, event: dict) -> None:
        with self.cond:
            self.snapshots.append(event)
            self.cond.notify_all()

    def terminal(self) -> bool:
        return self.state in (DONE, FAILED, PARTIAL)


@dataclass
class SessionRegion:
    region: Region
    method: str  # which trainer the region was validated for


class Session:
    def __init__(self, session_id: str, directory: Path, micrograph: Micrograph):
        self.id = session_id
        self.dir = directory
        self.micrograph = micrograph
        self.regions: list[SessionRegion] = []
        self.lock = threading.Lock()
        self.training_busy = False  # one mutating training job at a time

    @property
    def bundle_dir(self) -> Path:
        return self.dir / "bundles"

    @property
    def result_dir(self) -> Path:
        return self.dir / "results"

    def bundle_path(self, bundle_id: str) -> Path:
        return self.bundle_dir / f"{bundle_id}.bundle"

    def list_bundles(self) -> list[str]:
        if not self.bundle_dir.is_dir():
            return []
        return sorted(p.stem for p in self.bundle_dir.glob("*.bundle"))

    def save_meta(self) -> None:
        meta = {
            "v": API_VERSION,
            "kind": self.micrograph.kind,
            "n_phases": self.micrograph.n_phases,
            "source_hash": self.micrograph.source_hash,
            "width": self.micrograph.width,
            "height": self.micrograph.height,
            "regions": [
                {"method": sr.method, "region": sr.region.to_json()} for sr in self.regions
            ],
        }
        (self.dir / "meta.json").write_text(json.dumps(meta, sort_keys=True))


class ServiceState:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}
        self.lock = threading.Lock()

    # -- sessions

    def create_session(self, image_bytes: bytes, kind_hint: str | None) -> Session:
        session_id = uuid.uuid4().hex[:12]
        sdir = self.data_dir / "sessions" / session_id
        sdir.mkdir(parents=True)
        (sdir / "image.png").write_bytes(image_bytes)
        try:
            micrograph = load_micrograph(sdir / "image.png", kind_hint=kind_hint)
        except ValueError:
            (sdir / "image.png").unlink()
            sdir.rmdir()
            raise
        session = Session(session_id, sdir, micrograph)
        session.bundle_dir.mkdir()
        session.result_dir.mkdir()
        session.save_meta()
        with self.lock:
            self.sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        with self.lock:
            if session_id in self.sessions:
                return self.sessions[session_id]
        sdir = self.data_dir / "sessions" / session_id
        if not (sdir / "meta.json").is_file():
            raise KeyError(session_id)
        meta = json.loads((sdir / "meta.json").read_text())
        micrograph = load_micrograph(sdir / "image.png", kind_hint=meta["kind"])
        session = Session(session_id, sdir, micrograph)
        for entry in meta.get("regions", []):
            session.regions.append(
                SessionRegion(region_from_json(entry["region"]), entry["method"])
            )
        with self.lock:
            self.sessions.setdefault(session_id, session)
            return self.sessions[session_id]

    def get_job(self, job_id: str) -> Job:
        with self.lock:
            if job_id not in self.jobs:
                raise KeyError(job_id)
            return self.jobs[job_id]

    # -- jobs

    def start_job(
        self,
        session: Session,
        method: str,
        config: dict,
        region_index: int | None,
        bundle_id: str | None,
        rng_seed: int,
    ) -> Job:
        if method in (JOB_GOPT, JOB_ZOPT_TRAIN):
            with session.lock:
                if session.training_busy:
                    raise RuntimeError("a training job is already running for this session")
                session.training_busy = True
        job = Job(
            id=uuid.uuid4().hex[:12],
            session_id=session.id,
            method=method,
            config=config,
            region_index=region_index,
        )
        with self.lock:
            self.jobs[job.id] = job
        job.thread = threading.Thread(
            target=self._run_job, args=(session, job, bundle_id, rng_seed), daemon=True
        )
        job.thread.start()
        return job

    def _observer(self, job: Job, every: int):
        def cb(step: TrainStep):
            if step.iteration % every == 0 or step.iteration == 0:
                job.last_iteration = step.iteration
                job.publish(
                    {
                        "v": API_VERSION,
                        "type": "progress",
                        "iteration": step.iteration,
                        "l_d": step.l_d,
                        "l_g": step.l_g,
                        "l_cl": step.l_cl,
                        "wall_time": step.wall_time,
                        "preview": job.preview_png is not None,
                    }
                )

        return cb

    def _snapshot(self, job: Job):
        def cb(iteration: int, preview: Micrograph):
            job.preview_png = _png_bytes(preview)

        return cb

    def _run_job(self, session: Session, job: Job, bundle_id: str | None, rng_seed: int) -> None:
        job.transition(RUNNING)
        release_training = job.method in (JOB_GOPT, JOB_ZOPT_TRAIN)
        try:
            img = session.micrograph
            if job.method == JOB_GOPT:
                cfg = TrainingConfig.from_dict(job.config)
                region = session.regions[job.region_index].region
                bundle = train_gopt(
                    img,
                    region,
                    cfg,
                    rng=rng_seed,
                    observer=self._observer(job, cfg.snapshot_every),
                    cancel=job.cancel_event,
                    snapshot=self._snapshot(job),
                )
                job.bundle_id = f"gopt-{job.id}"
                save_bundle(bundle, session.bundle_path(job.bundle_id))
            elif job.method == JOB_ZOPT_TRAIN:
                cfg = TrainingConfig.from_dict({**job.config, "content_coeff": 0.0})
                region = (
                    session.regions[job.region_index].region
                    if job.region_index is not None
                    else None
                )
                bundle = train_wgan(
                    img,
                    cfg,
                    rng=rng_seed,
                    region=region,
                    observer=self._observer(job, cfg.snapshot_every),
                    cancel=job.cancel_event,
                    snapshot=self._snapshot(job),
                )
                job.bundle_id = f"wgan-{job.id}"
                save_bundle(bundle, session.bundle_path(job.bundle_id))
            elif job.method == JOB_ZOPT_OPTIMIZE:
                if bundle_id is None:
                    raise ValueError("zopt_optimize needs a bundle id")
                path = session.bundle_path(bundle_id)
                if not path.is_file():
                    raise ValueError(f"unknown bundle: {bundle_id}")
                bundle = load_bundle(path)
                cfg = ZOptConfig.from_dict(job.config)
                region = session.regions[job.region_index].region

                def z_observer(cp):
                    job.last_iteration = cp.iteration
                    job.publish(
                        {
                            "v": API_VERSION,
                            "type": "progress",
                            "iteration": cp.iteration,
                            "mse": cp.mse,
                            "kl": cp.kl,
                            "best_mse": cp.best_mse,
                            "preview": job.preview_png is not None,
                        }
                    )

                seed, trace = optimize_seed(
                    bundle,
                    img,
                    region,
                    cfg,
                    rng=rng_seed,
                    observer=z_observer,
                    cancel=job.cancel_event,
                )
                result = evaluate_zopt(bundle, seed, img, region)
                job.result_id = self._store_result(session, result)
                job.preview_png = _png_bytes(result.image)
            else:
                raise ValueError(f"unknown job method: {job.method}")

            was_cancelled = job.cancel_event.is_set()
            job.publish(
                {
                    "v": API_VERSION,
                    "type": "end",
                    "state": PARTIAL if was_cancelled else DONE,
                    "bundle_id": job.bundle_id,
                    "result_id": job.result_id,
                }
            )
            job.transition(PARTIAL if was_cancelled else DONE)
        except Exception as exc:  # surfaced through the terminal event
            job.error = str(exc)
            job.publish({"v": API_VERSION, "type": "end", "state": FAILED, "error": str(exc)})
            try:
                job.transition(FAILED)
            except RuntimeError:
                pass
        finally:
            if release_training:
                with session.lock:
                    session.training_busy = False

    def _store_result(self, session: Session, result: InpaintResult) -> str:
        result_id = uuid.uuid4().hex[:12]
        png = _png_bytes(result.image)
        (session.result_dir / f"{result_id}.png").write_bytes(png)
        meta = {
            "v": API_VERSION,
            "method": result.method,
            "seed_digest": result.seed_digest,
            "region": result.region.to_json(),
            "resample_warning": result.resample_warning,
        }
        (session.result_dir / f"{result_id}.json").write_text(json.dumps(meta, sort_keys=True))
        return result_id

    def cancel_all_running(self) -> None:
        with self.lock:
            jobs = list(self.jobs.values())
        for job in jobs:
            if job.state == RUNNING:
                try:
                    job.transition(CANCELLING)
                except RuntimeError:
                    continue
                job.cancel_event.set()
        for job in jobs:
            if job.thread is not None and job.thread.is_alive():
                job.thread.join(timeout=60)


def _require(condition: bool, status: int, message: str) -> None:
    if not condition:
        raise HTTPException(status_code=status, detail=message)


def _snap8(v: int) -> int:
    return max(8, round(v / 8) * 8)


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    data_dir = Path(
        data_dir or os.environ.get("MICROINPAINT_DATA_DIR", Path.cwd() / "microinpaint-data")
    )
    state = ServiceState(data_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.cancel_all_running()

    app = FastAPI(title="microinpaint", version=__version__, lifespan=lifespan)
    app.state.service = state

    @app.get("/health")
    def health():
        return {"v": API_VERSION, "version": __version__}

    @app.post("/sessions")
    async def create_session(request: Request, kind_hint: str | None = Query(default=None)):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image") or form.get("file")
            _require(
                upload is not None and not isinstance(upload, str),
                422,
                "multipart field 'image' missing",
            )
            body = await upload.read()
        else:
            body = await request.body()
        _require(len(body) > 0, 422, "empty upload")
        try:
            session = state.create_session(body, kind_hint)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        m = session.micrograph
        return {
            "v": API_VERSION,
            "session_id": session.id,
            "kind": m.kind,
            "n_phases": m.n_phases,
            "width": m.width,
            "height": m.height,
            "source_hash": m.source_hash,
        }

    def _session(session_id: str) -> Session:
        try:
            return state.get_session(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id}")

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = _session(session_id)
        return {
            "v": API_VERSION,
            "session_id": session.id,
            "kind": session.micrograph.kind,
            "regions": [
                {"index": i, "method": sr.method, "region": sr.region.to_json()}
                for i, sr in enumerate(session.regions)
            ],
            "bundles": session.list_bundles(),
            "results": sorted(p.stem for p in session.result_dir.glob("*.png")),
        }

    @app.post("/sessions/{session_id}/region")
    def set_region(session_id: str, payload: dict):
        session = _session(session_id)
        method = payload.get("method")
        _require(method in ("gopt", "zopt"), 422, "method must be 'gopt' or 'zopt'")
        shape = payload.get("region", {})
        if method == "gopt":
            _require(
                shape.get("shape") == "rect",
                422,
                "generator optimisation takes rectangular regions",
            )
            w, h = int(shape.get("w", 0)), int(shape.get("h", 0))
            if w % 8 or h % 8:
                raise HTTPException(
                    status_code=422,
                    detail=(
                        f"rectangle extents must be multiples of 8; "
                        f"nearest valid size is {_snap8(w)}x{_snap8(h)}"
                    ),
                )
        else:
            _require(
                shape.get("shape") == "polygon",
                422,
                "seed optimisation takes polygon regions",
            )
        try:
            region = region_from_json(shape)
            validate_region(region, session.micrograph)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with session.lock:
            session.regions.append(SessionRegion(region, method))
            index = len(session.regions) - 1
            session.save_meta()
        return {"v": API_VERSION, "region_index": index, "region": region.to_json()}

    @app.post("/sessions/{session_id}/jobs")
    def start_job(session_id: str, payload: dict):
        session = _session(session_id)
        method = payload.get("method")
        _require(
            method in (JOB_GOPT, JOB_ZOPT_TRAIN, JOB_ZOPT_OPTIMIZE),
            422,
            f"unknown method: {method}",
        )
        region_index = payload.get("region_index")
        if region_index is None and session.regions:
            region_index = len(session.regions) - 1
        if method != JOB_ZOPT_TRAIN:
            _require(
                region_index is not None and 0 <= region_index < len(session.regions),
                422,
                "no region set for this session",
            )
        bundle_id = payload.get("bundle_id")
        if method == JOB_ZOPT_OPTIMIZE:
            _require(bundle_id is not None, 422, "zopt_optimize needs a bundle_id")
            _require(
                session.bundle_path(bundle_id).is_file(), 422, f"unknown bundle: {bundle_id}"
            )
        try:
            job = state.start_job(
                session,
                method,
                payload.get("config", {}),
                region_index,
                bundle_id,
                int(payload.get("rng_seed", 0)),
            )
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"v": API_VERSION, "job_id": job.id, "state": job.state}

    def _job(job_id: str) -> Job:
        try:
            return state.get_job(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job: {job_id}")

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = _job(job_id)
        latest = job.snapshots[-1] if job.snapshots else None
        return {
            "v": API_VERSION,
            "job_id": job.id,
            "session_id": job.session_id,
            "method": job.method,
            "state": job.state,
            "error": job.error,
            "bundle_id": job.bundle_id,
            "result_id": job.result_id,
            "last_iteration": job.last_iteration,
            "progress": latest,
        }

    @app.get("/jobs/{job_id}/events")
    def job_events(job_id: str, request: Request, after: int = Query(default=-1)):
        job = _job(job_id)
        last_event_id = request.headers.get("last-event-id")
        start = int(last_event_id) + 1 if last_event_id is not None else after + 1

        def stream():
            idx = start
            while True:
                with job.cond:
                    while idx >= len(job.snapshots) and not job.terminal():
                        job.cond.wait(timeout=1.0)
                    events = job.snapshots[idx:]
                    finished = job.terminal()
                for event in events:
                    yield f"id: {idx}\ndata: {json.dumps(event)}\n\n"
                    idx += 1
                    if event.get("type") == "end":
                        return
                if finished and idx >= len(job.snapshots):
                    # job ended before any end event could be written
                    terminal = {"v": API_VERSION, "type": "end", "state": job.state}
                    yield f"id: {idx}\ndata: {json.dumps(terminal)}\n\n"
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        job = _job(job_id)
        with job.cond:
            if job.state == RUNNING:
                job.state = CANCELLING
                job.cond.notify_all()
                job.cancel_event.set()
            elif job.state == QUEUED:
                job.cancel_event.set()
        return {"v": API_VERSION, "job_id": job.id, "state": job.state}

    @app.get("/jobs/{job_id}/preview")
    def job_preview(job_id: str):
        job = _job(job_id)
        _require(job.preview_png is not None, 404, "no preview yet")
        return Response(content=job.preview_png, media_type="image/png")

    @app.post("/sessions/{session_id}/resample")
    def resample(session_id: str, payload: dict):
        session = _session(session_id)
        bundle_id = payload.get("bundle_id")
        _require(bundle_id is not None, 422, "bundle_id required")
        path = session.bundle_path(bundle_id)
        _require(path.is_file(), 404, f"unknown bundle: {bundle_id}")
        bundle = load_bundle(path)
        rng = torch.Generator().manual_seed(int(payload.get("rng_seed", 0)))
        if bundle.method == METHOD_GOPT:
            _require(
                bundle.fixed_seed is not None,
                409,
                "partial bundle has no fixed seed to resample",
            )
            result = evaluate_gopt(bundle, session.micrograph, resample=True, rng=rng)
        else:
            region_index = payload.get("region_index", len(session.regions) - 1)
            _require(0 <= region_index < len(session.regions), 422, "no region available")
            region = session.regions[region_index].region
            cfg = ZOptConfig.from_dict(payload.get("config", {"iterations": 500}))
            seed, _ = optimize_seed(
                bundle, session.micrograph, region, cfg, rng=int(payload.get("rng_seed", 0))
            )
            result = evaluate_zopt(bundle, seed, session.micrograph, region)
        result.verify_against(session.micrograph)
        result_id = state._store_result(session, result)
        return {
            "v": API_VERSION,
            "result_id": result_id,
            "method": result.method,
            "seed_digest": result.seed_digest,
            "resample_warning": result.resample_warning,
        }

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, result_id: str = Query(...), meta: bool = Query(default=False)):
        session = _session(session_id)
        png = session.result_dir / f"{result_id}.png"
        _require(png.is_file(), 404, f"unknown result: {result_id}")
        if meta:
            return json.loads((session.result_dir / f"{result_id}.json").read_text())
        return Response(content=png.read_bytes(), media_type="image/png")

    @app.get("/sessions/{session_id}/bundles/{bundle_id}")
    def download_bundle(session_id: str, bundle_id: str):
        session = _session(session_id)
        path = session.bundle_path(bundle_id)
        _require(path.is_file(), 404, f"unknown bundle: {bundle_id}")
        return Response(
            content=path.read_bytes(),
            media_type="application/zip",
            headers={"X-Bundle-Digest": bundle_digest(path)},
        )

    return app
