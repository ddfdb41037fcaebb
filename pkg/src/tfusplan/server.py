"""Interactive planning HTTP service.

Cases are registered by pointing at rct/sct volume files; volumes stay
memory-resident per case with an LRU cap. Planning (ray casting) is
synchronous and fast; pressure simulations run as per-case queued jobs in
background threads, with at most one simulation running per case. All
planning responses are derived from immutable volume snapshots, so
concurrent read requests never block on a running job.
"""

from __future__ import annotations

import io
import itertools
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .acoustics import build_medium
from .config import RunConfig
from .rays import RayCaster, optimize_array_tilt, plan_summary
from .sim import simulate
from .skull import SkullMask, intracranial_mask
from .transducer import TILT_LIMIT_DEG, build_array
from .volume import Unit, Volume, VolumeError, WorldPoint, read_volume

VolumeChoice = Literal["rct", "sct"]
SliceKind = Literal["rct", "sct", "rms"]
AXES = {"x": 0, "y": 1, "z": 2}


def api_error(status: int, code: str, stage: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "stage": stage, "message": message})


class PlanRequest(BaseModel):
    target: tuple[float, float, float]
    tilt_x: float = 0.0
    tilt_y: float = 0.0
    volume_choice: VolumeChoice = "sct"


class OptimizeRequest(BaseModel):
    target: tuple[float, float, float]
    volume_choice: VolumeChoice = "sct"
    step_deg: float = Field(default=1.0, gt=0)


class RegisterRequest(BaseModel):
    case_id: str
    rct_path: str
    sct_path: Optional[str] = None


@dataclass
class JobRecord:
    job_id: str
    case_id: str
    state: str = "queued"           # queued -> running -> done | failed
    progress: float = 0.0
    result: Optional[dict] = None
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {"job_id": self.job_id, "case_id": self.case_id, "state": self.state,
                "progress": round(self.progress, 4), "result": self.result, "error": self.error}


@dataclass
class CaseEntry:
    case_id: str
    paths: dict
    volumes: dict = field(default_factory=dict)      # choice -> Volume
    casters: dict = field(default_factory=dict)      # choice -> RayCaster
    rms: Optional[Volume] = None
    job_queue: "queue.Queue" = None
    worker: Optional[threading.Thread] = None


class PlanServer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.cases: dict[str, CaseEntry] = {}
        self.jobs: dict[str, JobRecord] = {}
        self.lock = threading.RLock()
        self._job_counter = itertools.count(1)
        self._lru: list[str] = []

    # -- case / volume management ------------------------------------------

    def register(self, req: RegisterRequest) -> dict:
        with self.lock:
            if req.case_id in self.cases:
                raise api_error(409, "conflict", "register", f"case {req.case_id!r} already exists")
            paths = {"rct": req.rct_path}
            if req.sct_path:
                paths["sct"] = req.sct_path
            for choice, p in paths.items():
                if not Path(p).exists():
                    raise api_error(400, "io", "register", f"{choice} file not found: {p}")
            entry = CaseEntry(case_id=req.case_id, paths=paths,
                              job_queue=queue.Queue(maxsize=self.cfg.server.queue_limit))
            self.cases[req.case_id] = entry
        # load eagerly so registration fails fast on broken files
        self.volume(req.case_id, "rct")
        return self.describe(req.case_id)

    def entry(self, case_id: str) -> CaseEntry:
        with self.lock:
            if case_id not in self.cases:
                raise api_error(404, "not-found", "case", f"unknown case {case_id!r}")
            return self.cases[case_id]

    def describe(self, case_id: str) -> dict:
        e = self.entry(case_id)
        vol = e.volumes.get("rct")
        return {
            "case_id": e.case_id,
            "volumes": sorted(e.paths),
            "loaded": sorted(e.volumes),
            "dims": list(vol.dims) if vol is not None else None,
            "spacing_mm": list(vol.spacing) if vol is not None else None,
            "origin_mm": list(vol.origin) if vol is not None else None,
            "has_rms": e.rms is not None,
        }

    def volume(self, case_id: str, choice: str) -> Volume:
        e = self.entry(case_id)
        if choice == "rms":
            if e.rms is None:
                raise api_error(409, "not-available", "slice",
                                "no completed simulation for this case yet")
            return e.rms
        if choice not in e.paths:
            raise api_error(404, "not-found", "volume", f"case has no {choice} volume")
        with self.lock:
            if choice not in e.volumes:
                try:
                    e.volumes[choice] = read_volume(e.paths[choice])
                except (OSError, VolumeError) as exc:
                    raise api_error(400, "io", "load", str(exc))
                self._touch(case_id)
                self._evict()
            else:
                self._touch(case_id)
        return e.volumes[choice]

    def _touch(self, case_id: str):
        if case_id in self._lru:
            self._lru.remove(case_id)
        self._lru.append(case_id)

    def _evict(self):
        limit = self.cfg.server.max_cases_in_memory
        while len(self._lru) > limit:
            victim = self._lru.pop(0)
            e = self.cases.get(victim)
            if e is not None:
                e.volumes.clear()
                e.casters.clear()

    def caster(self, case_id: str, choice: str) -> RayCaster:
        e = self.entry(case_id)
        vol = self.volume(case_id, choice)
        with self.lock:
            if choice not in e.casters:
                ray = self.cfg.ray
                e.casters[choice] = RayCaster(
                    vol, bone_threshold=ray.bone_threshold_hu, step=ray.step_mm,
                    normal_sigma=ray.normal_sigma_mm, sdr_margin=ray.sdr_margin_mm,
                    angle_limit=ray.active_angle_deg)
            return e.casters[choice]

    # -- planning -----------------------------------------------------------

    def _validated_pose(self, case_id: str, req: PlanRequest):
        if abs(req.tilt_x) > TILT_LIMIT_DEG or abs(req.tilt_y) > TILT_LIMIT_DEG:
            raise api_error(422, "validation", "plan",
                            f"tilt ({req.tilt_x}, {req.tilt_y}) exceeds the "
                            f"{TILT_LIMIT_DEG} degree bound per axis")
        vol = self.volume(case_id, req.volume_choice)
        target = np.asarray(req.target, dtype=float)
        if not vol.contains_world(target[None, :])[0]:
            raise api_error(422, "validation", "plan", f"target {req.target} is outside the volume")
        return vol, WorldPoint(*req.target)

    def plan(self, case_id: str, req: PlanRequest) -> dict:
        vol, target = self._validated_pose(case_id, req)
        caster = self.caster(case_id, req.volume_choice)
        array = build_array(self.cfg.array.radius_mm, target, req.tilt_x, req.tilt_y)
        summary = plan_summary(vol, array, caster=caster)
        return {
            "case_id": case_id,
            "volume_choice": req.volume_choice,
            "target": list(req.target),
            "tilt_x": req.tilt_x,
            "tilt_y": req.tilt_y,
            "nae": summary.nae,
            "sdr": summary.sdr,
            "st_mean_mm": summary.st_mean,
            "active": [bool(p.active) for p in summary.per_element],
            "element_indices": [p.element_index for p in summary.per_element],
        }

    def elements(self, case_id: str, req: PlanRequest) -> list:
        vol, target = self._validated_pose(case_id, req)
        caster = self.caster(case_id, req.volume_choice)
        array = build_array(self.cfg.array.radius_mm, target, req.tilt_x, req.tilt_y)
        summary = plan_summary(vol, array, caster=caster)
        rows = []
        focus = target.as_array()
        for p, pos in zip(summary.per_element, array.enabled_positions()):
            offset = (pos - focus) / array.radius
            rows.append({
                "index": p.element_index,
                "offset": [round(float(v), 6) for v in offset],
                "incident_angle_deg": None if np.isnan(p.incident_angle) else round(p.incident_angle, 3),
                "skull_thickness_mm": round(p.skull_thickness, 3),
                "sdr": round(p.sdr_ray, 6),
                "active": bool(p.active),
            })
        return rows

    def optimize(self, case_id: str, req: OptimizeRequest) -> dict:
        plan_req = PlanRequest(target=req.target, volume_choice=req.volume_choice)
        vol, target = self._validated_pose(case_id, plan_req)
        caster = self.caster(case_id, req.volume_choice)
        tx, ty, nae = optimize_array_tilt(vol, self.cfg.array.radius_mm, target,
                                          step_deg=req.step_deg, caster=caster)
        return {"tilt_x": tx, "tilt_y": ty, "nae": nae}

    # -- slices --------------------------------------------------------------

    def slice_plane(self, case_id: str, kind: str, axis: str, index: int) -> np.ndarray:
        if axis not in AXES:
            raise api_error(422, "validation", "slice", f"axis must be one of {sorted(AXES)}")
        vol = self.volume(case_id, kind)
        a = AXES[axis]
        if not (0 <= index < vol.dims[a]):
            raise api_error(422, "validation", "slice",
                            f"index {index} out of range [0, {vol.dims[a]})")
        return np.take(vol.data, index, axis=a)

    # -- jobs ----------------------------------------------------------------

    def submit_job(self, case_id: str, req: PlanRequest) -> dict:
        e = self.entry(case_id)
        self._validated_pose(case_id, req)
        with self.lock:
            job = JobRecord(job_id=f"job-{next(self._job_counter)}", case_id=case_id)
            self.jobs[job.job_id] = job
            try:
                e.job_queue.put_nowait((job, req))
            except queue.Full:
                job.state = "failed"
                job.error = "queue full"
                raise api_error(429, "queue-full", "simulate",
                                f"case {case_id!r} already has {self.cfg.server.queue_limit} queued jobs")
            if e.worker is None or not e.worker.is_alive():
                e.worker = threading.Thread(target=self._case_worker, args=(case_id,), daemon=True)
                e.worker.start()
        return {"job_id": job.job_id}

    def job(self, job_id: str) -> JobRecord:
        with self.lock:
            if job_id not in self.jobs:
                raise api_error(404, "not-found", "job", f"unknown job {job_id!r}")
            return self.jobs[job_id]

    def _case_worker(self, case_id: str):
        e = self.entry(case_id)
        while True:
            try:
                job, req = e.job_queue.get(timeout=2.0)
            except queue.Empty:
                return
            job.state = "running"
            try:
                job.result = self._run_simulation(case_id, req, job)
                job.progress = 1.0
                job.state = "done"
            except Exception as exc:  # surface stage diagnostics in the status
                job.error = str(exc)
                job.state = "failed"

    def _run_simulation(self, case_id: str, req: PlanRequest, job: JobRecord) -> dict:
        e = self.entry(case_id)
        vol = self.volume(case_id, req.volume_choice)
        target = WorldPoint(*req.target)
        cfg = self.cfg
        bone = vol.data >= cfg.extract.threshold_hu
        sk = SkullMask(vol.with_data(bone.astype(np.float32), unit=Unit.DIMENSIONLESS),
                       cfg.extract.threshold_hu, 0.0)
        mask = intracranial_mask(sk, target)
        medium = build_medium(vol, cfg.acoustic, f0=cfg.sim.f0)
        array = build_array(cfg.array.radius_mm, target, req.tilt_x, req.tilt_y)

        def progress(done, total):
            job.progress = done / total

        res = simulate(medium, array, cfg.sim, mask, target=target,
                       threads=cfg.threads, progress=progress)
        with self.lock:
            e.rms = res.rms
        return {
            "max_rms_pa": res.max_rms,
            "argmax_mm": list(res.argmax.as_array()),
            "focal_shift_mm": res.focal_shift,
            "volume_choice": req.volume_choice,
        }


def _to_png(plane: np.ndarray, window: float, level: float) -> bytes:
    from PIL import Image

    lo, hi = level - window / 2.0, level + window / 2.0
    scaled = np.clip((plane.astype(np.float64) - lo) / max(hi - lo, 1e-30), 0.0, 1.0)
    img = Image.fromarray((scaled.T * 255.0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(cfg: RunConfig = None, ui_dir=None) -> FastAPI:
    cfg = cfg if cfg is not None else RunConfig.defaults().validate()
    state = PlanServer(cfg)
    app = FastAPI(title="tfusplan planning service")
    app.state.planner = state

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request, exc):
        return JSONResponse(status_code=422, content={
            "code": "validation", "stage": "request", "message": str(exc.errors()),
        })

    @app.exception_handler(HTTPException)
    async def _http_handler(request, exc):
        detail = exc.detail if isinstance(exc.detail, dict) else {
            "code": "error", "stage": "request", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.get("/cases")
    def list_cases():
        return [state.describe(cid) for cid in sorted(state.cases)]

    @app.post("/cases", status_code=201)
    def register_case(req: RegisterRequest):
        return state.register(req)

    @app.get("/cases/{case_id}")
    def get_case(case_id: str):
        return state.describe(case_id)

    @app.post("/cases/{case_id}/plan")
    def plan_case(case_id: str, req: PlanRequest):
        return state.plan(case_id, req)

    @app.get("/cases/{case_id}/elements")
    def case_elements(case_id: str, target: str, tilt_x: float = 0.0, tilt_y: float = 0.0,
                      volume_choice: VolumeChoice = "sct"):
        try:
            coords = tuple(float(v) for v in target.split(","))
            assert len(coords) == 3
        except (ValueError, AssertionError):
            raise api_error(422, "validation", "elements", "target must be 'x,y,z'")
        req = PlanRequest(target=coords, tilt_x=tilt_x, tilt_y=tilt_y, volume_choice=volume_choice)
        return state.elements(case_id, req)

    @app.post("/cases/{case_id}/optimize")
    def optimize_case(case_id: str, req: OptimizeRequest):
        return state.optimize(case_id, req)

    @app.get("/cases/{case_id}/slice")
    def case_slice(case_id: str, volume: SliceKind = "rct", axis: str = "z",
                   index: int = 0, window: float = Query(default=2000.0, gt=0),
                   level: float = 500.0):
        plane = state.slice_plane(case_id, volume, axis, index)
        png = _to_png(plane, window, level)
        return Response(content=png, media_type="image/png", headers={
            "X-Window-Width": str(window), "X-Window-Level": str(level),
            "X-Plane-Dims": f"{plane.shape[0]},{plane.shape[1]}",
        })

    @app.get("/cases/{case_id}/slice.raw")
    def case_slice_raw(case_id: str, volume: SliceKind = "rct", axis: str = "z", index: int = 0):
        plane = state.slice_plane(case_id, volume, axis, index)
        return Response(content=np.asarray(plane, dtype="<f4").tobytes(),
                        media_type="application/octet-stream",
                        headers={"X-Plane-Dims": f"{plane.shape[0]},{plane.shape[1]}"})

    @app.post("/cases/{case_id}/simulate", status_code=202)
    def simulate_case(case_id: str, req: PlanRequest):
        return state.submit_job(case_id, req)

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return state.job(job_id).as_dict()

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
