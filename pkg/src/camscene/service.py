"""HTTP service backing the interactive trajectory designer.

Scene state lives in a directory-backed store (scenes/{id}/...) so sessions
survive restarts. Preview frames render on demand in request threads and
cache per (trajectory version, frame, radius); shaping jobs run on their own
single-worker queue so they never block preview traffic. Trajectory writes
serialize per scene under a lock; every mutation bumps an integer version
that responses echo, and clients discard frames from stale versions.
"""

from __future__ import annotations

import json
import struct
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import io as cio
from .errors import CamsceneError, ParseError, ValidationError
from .geometry import (
    CameraIntrinsics,
    Pose,
    Trajectory,
    canonicalize,
    interpolate_keyframes,
    invert_trajectory,
    unproject,
)
from .metrics import TrajectoryPair, compute_report
from .rasters import PointCloud
from .renderer import render_preview, shaping_mask, splat
from .shaping import (
    LatentVideo,
    NoisePredictor,
    NoiseSchedule,
    PullOracle,
    ShapingConfig,
    TrueEpsOracle,
    default_step_list,
    fresh_eps,
    sample_with_shaping,
)
from .geometry import invert_pose

DEFAULT_RADIUS = 1
DEFAULT_KERNEL = 3


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)


@dataclass
class ShapeJob:
    job_id: str
    status: str = "pending"  # pending | running | done | error | interrupted
    n_frames: int = 0
    params: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class SceneSession:
    scene_id: str
    intrinsics: CameraIntrinsics
    image: np.ndarray
    depth: object
    cloud: PointCloud
    created_at: float
    keyframes: list = field(default_factory=list)
    n_frames: int = 16
    trajectory: Trajectory | None = None
    version: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    preview_cache: dict = field(default_factory=dict)
    mask_cache: dict = field(default_factory=dict)
    jobs: dict = field(default_factory=dict)


def _pose_from_doc(doc: dict) -> Pose:
    try:
        r = np.array([float(x) for x in doc["r"]]).reshape(3, 3)
        t = np.array([float(x) for x in doc["t"]])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed pose: {e}") from None
    return Pose(r, t)


def _pose_to_doc(p: Pose) -> dict:
    return {"r": [float(x) for x in p.rotation.reshape(-1)], "t": [float(x) for x in p.translation]}


class SceneStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.scenes_dir = self.root / "scenes"
        self.scenes_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, SceneSession] = {}
        self.shape_executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="shape")
        self._load_existing()

    # --- persistence ----------------------------------------------------

    def _scene_dir(self, scene_id: str) -> Path:
        return self.scenes_dir / scene_id

    def _load_existing(self) -> None:
        for d in sorted(self.scenes_dir.iterdir()) if self.scenes_dir.exists() else []:
            if not d.is_dir():
                continue
            try:
                self.sessions[d.name] = self._load_scene(d)
            except (CamsceneError, OSError, json.JSONDecodeError, KeyError):
                continue  # a torn write must not take the service down

    def _load_scene(self, d: Path) -> SceneSession:
        image = cio.read_color_png(d / "image.png")
        depth = cio.read_pfm(d / "depth.pfm")
        intrinsics = cio.read_intrinsics(d / "intrinsics.json")
        cloud = unproject(depth, intrinsics, image).as_world()
        meta = json.loads((d / "meta.json").read_text())
        session = SceneSession(
            scene_id=d.name,
            intrinsics=intrinsics,
            image=image,
            depth=depth,
            cloud=cloud,
            created_at=meta.get("created_at", 0.0),
        )
        traj_path = d / "trajectory.json"
        if traj_path.exists():
            doc = json.loads(traj_path.read_text())
            session.keyframes = [_pose_from_doc(p) for p in doc["keyframes"]]
            session.n_frames = int(doc["n_frames"])
            session.version = int(doc["version"])
            if session.keyframes:
                session.trajectory = interpolate_keyframes(session.keyframes, session.n_frames)
        jobs_dir = d / "jobs"
        if jobs_dir.exists():
            for jd in sorted(jobs_dir.iterdir()):
                status_path = jd / "status.json"
                if not status_path.exists():
                    continue
                doc = json.loads(status_path.read_text())
                job = ShapeJob(
                    job_id=jd.name,
                    status=doc.get("status", "error"),
                    n_frames=doc.get("n_frames", 0),
                    params=doc.get("params", {}),
                    error=doc.get("error", ""),
                )
                if job.status in ("pending", "running"):
                    job.status = "interrupted"
                session.jobs[jd.name] = job
        return session

    def _persist_trajectory(self, session: SceneSession) -> None:
        doc = {
            "version": session.version,
            "n_frames": session.n_frames,
            "keyframes": [_pose_to_doc(p) for p in session.keyframes],
        }
        path = self._scene_dir(session.scene_id) / "trajectory.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        tmp.replace(path)

    def _persist_job(self, session: SceneSession, job: ShapeJob) -> None:
        jd = self._scene_dir(session.scene_id) / "jobs" / job.job_id
        jd.mkdir(parents=True, exist_ok=True)
        (jd / "status.json").write_text(
            json.dumps(
                {
                    "status": job.status,
                    "n_frames": job.n_frames,
                    "params": job.params,
                    "error": job.error,
                }
            )
        )

    # --- scene lifecycle ----------------------------------------------------

    def create_scene(self, image_bytes: bytes, depth_bytes: bytes, intrinsics_bytes: bytes) -> SceneSession:
        import io as _io

        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(_io.BytesIO(image_bytes)) as im:
                image = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        except UnidentifiedImageError:
            raise ApiError(400, "bad_image", "image is not a decodable PNG")
        try:
            depth = cio.decode_pfm(depth_bytes)
        except ParseError as e:
            raise ApiError(400, "bad_depth", "depth raster is malformed", str(e))
        try:
            intrinsics = cio.intrinsics_from_json(json.loads(intrinsics_bytes))
        except (ParseError, json.JSONDecodeError) as e:
            raise ApiError(400, "bad_intrinsics", "intrinsics JSON is malformed", str(e))
        try:
            cloud = unproject(depth, intrinsics, image).as_world()
        except CamsceneError as e:
            raise ApiError(400, "bad_scene", "scene inputs are inconsistent", str(e))

        scene_id = uuid.uuid4().hex[:12]
        d = self._scene_dir(scene_id)
        d.mkdir(parents=True)
        cio.write_color_png(d / "image.png", image)
        cio.write_pfm(d / "depth.pfm", depth)
        (d / "intrinsics.json").write_text(json.dumps(cio.intrinsics_to_json(intrinsics)))
        session = SceneSession(
            scene_id=scene_id,
            intrinsics=intrinsics,
            image=image,
            depth=depth,
            cloud=cloud,
            created_at=time.time(),
        )
        (d / "meta.json").write_text(json.dumps({"created_at": session.created_at}))
        self.sessions[scene_id] = session
        return session

    def get(self, scene_id: str) -> SceneSession:
        session = self.sessions.get(scene_id)
        if session is None:
            raise ApiError(404, "unknown_scene", f"no scene {scene_id!r}")
        return session

    # --- trajectory ----------------------------------------------------------

    def put_trajectory(self, scene_id: str, keyframe_docs: list, n_frames: int) -> SceneSession:
        session = self.get(scene_id)
        try:
            keyframes = [_pose_from_doc(p) for p in keyframe_docs]
            trajectory = interpolate_keyframes(keyframes, n_frames)
        except CamsceneError as e:
            raise ApiError(422, "invalid_trajectory", "keyframes rejected", str(e))
        with session.lock:  # last writer wins; version tells clients who won
            session.keyframes = keyframes
            session.n_frames = n_frames
            session.trajectory = trajectory
            session.version += 1
            self._persist_trajectory(session)
        return session

    def _require_trajectory(self, session: SceneSession) -> Trajectory:
        if session.trajectory is None:
            raise ApiError(404, "no_trajectory", "scene has no trajectory yet")
        return session.trajectory

    # --- rendering -------------------------------------------------------------

    def preview_png(self, scene_id: str, frame: int, radius: int) -> tuple[bytes, int]:
        session = self.get(scene_id)
        traj = self._require_trajectory(session)
        version = session.version
        if not (0 <= frame < len(traj)):
            raise ApiError(404, "no_frame", f"frame {frame} outside [0, {len(traj)})")
        key = (version, frame, radius)
        cached = session.preview_cache.get(key)
        if cached is None:
            rendered = splat(session.cloud, invert_pose(traj.poses[frame]), session.intrinsics, radius)
            cached = cio.encode_color_png(rendered.color)
            session.preview_cache[key] = cached
        return cached, version

    def mask_pbm(self, scene_id: str, frame: int, kernel: int, radius: int) -> tuple[bytes, int]:
        session = self.get(scene_id)
        traj = self._require_trajectory(session)
        version = session.version
        if not (0 <= frame < len(traj)):
            raise ApiError(404, "no_frame", f"frame {frame} outside [0, {len(traj)})")
        if kernel < 1 or kernel % 2 == 0:
            raise ApiError(400, "bad_kernel", f"kernel must be odd and >= 1, got {kernel}")
        key = (version, frame, kernel, radius)
        cached = session.mask_cache.get(key)
        if cached is None:
            rendered = splat(session.cloud, invert_pose(traj.poses[frame]), session.intrinsics, radius)
            cached = cio.encode_pbm(shaping_mask(rendered, kernel).mask)
            session.mask_cache[key] = cached
        return cached, version

    def pointcloud_payload(self, scene_id: str, max_points: int):
        session = self.get(scene_id)
        cloud = session.cloud
        n = len(cloud)
        stride = max(1, -(-n // max_points)) if max_points else 1
        idx = np.arange(0, n, stride)
        positions = cloud.positions[idx]
        colors = cloud.colors[idx] if cloud.colors is not None else np.ones((idx.size, 3))
        return positions, colors, n, stride

    # --- shaping jobs ----------------------------------------------------------

    def submit_shape_job(self, scene_id: str, params: dict) -> ShapeJob:
        session = self.get(scene_id)
        traj = self._require_trajectory(session)
        job = ShapeJob(job_id=uuid.uuid4().hex[:12], params=dict(params))
        job.n_frames = len(traj)
        session.jobs[job.job_id] = job
        self._persist_job(session, job)
        version = session.version
        self.shape_executor.submit(self._run_shape_job, session, job, version)
        return job

    def _run_shape_job(self, session: SceneSession, job: ShapeJob, version: int) -> None:
        job.status = "running"
        self._persist_job(session, job)
        try:
            params = job.params
            radius = int(params.get("radius", DEFAULT_RADIUS))
            kernel = int(params.get("kernel", DEFAULT_KERNEL))
            seed = int(params.get("seed", 0))
            steps = int(params.get("steps", 50))
            schedule = (
                NoiseSchedule.linear_alpha_bar()
                if params.get("schedule", "linear_alpha_bar") == "linear_alpha_bar"
                else NoiseSchedule.linear_beta()
            )
            t_ns_raw = params.get("t_ns", 900)
            t_ns = schedule.num_steps if t_ns_raw in ("off", None) else int(t_ns_raw)

            with session.lock:
                traj = session.trajectory
            frames = render_preview(session.cloud, traj, session.intrinsics, radius)
            masks = tuple(shaping_mask(f, kernel) for f in frames)
            cfg = ShapingConfig(
                preview=tuple(frames), masks=masks, t_ns=t_ns, kernel=kernel, rng_seed=seed
            )
            clean = LatentVideo(np.stack([f.color for f in frames]))
            name = params.get("denoiser", "pull")
            if name == "oracle":
                denoiser = TrueEpsOracle(clean, schedule)
            elif name == "noise":
                denoiser = NoisePredictor(schedule)
            elif name == "pull":
                denoiser = PullOracle(clean, schedule, strength=float(params.get("pull_strength", 0.4)))
            else:
                raise ValidationError(f"unknown denoiser {name!r}")
            step_list = default_step_list(schedule, steps)
            init = fresh_eps(seed, 0, clean.shape)
            result = sample_with_shaping(denoiser, cfg, schedule, step_list, init)

            jd = self._scene_dir(session.scene_id) / "jobs" / job.job_id
            for i in range(result.shape[0]):
                cio.write_color_png(jd / f"shaped_{i:03d}.png", np.clip(result.values[i], 0.0, 1.0))
            job.status = "done"
            job.params["version"] = version
        except Exception as e:  # report, never crash the worker
            job.status = "error"
            job.error = str(e)
        self._persist_job(session, job)

    def job(self, scene_id: str, job_id: str) -> ShapeJob:
        session = self.get(scene_id)
        job = session.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job {job_id!r}")
        return job

    def job_frame(self, scene_id: str, job_id: str, frame: int) -> bytes:
        job = self.job(scene_id, job_id)
        if job.status != "done":
            raise ApiError(409, "job_not_done", f"job status is {job.status}")
        path = self._scene_dir(scene_id) / "jobs" / job_id / f"shaped_{frame:03d}.png"
        if not path.exists():
            raise ApiError(404, "no_frame", f"no shaped frame {frame}")
        return path.read_bytes()

    # --- metrics ------------------------------------------------------------------

    def metrics_against(self, scene_id: str, gen: Trajectory) -> dict:
        session = self.get(scene_id)
        gt = self._require_trajectory(session)
        try:
            if gen.convention == "world_to_camera":
                gen = invert_trajectory(gen)
            pair = TrajectoryPair(gt=canonicalize(gt), gen=canonicalize(gen))
            return cio.report_to_json(compute_report(pair))
        except CamsceneError as e:
            raise ApiError(422, "bad_comparison", "trajectories are not comparable", str(e))


class TrajectoryBody(BaseModel):
    keyframes: list = Field(min_length=2)
    n_frames: int = Field(default=16, ge=2, le=4096)


class ShapeBody(BaseModel):
    t_ns: int | str = 900
    seed: int = 0
    steps: int = 50
    denoiser: str = "pull"
    kernel: int = 3
    radius: int = 1
    schedule: str = "linear_alpha_bar"
    pull_strength: float = 0.4


class MetricsBody(BaseModel):
    trajectory: dict


def create_app(data_dir) -> FastAPI:
    store = SceneStore(Path(data_dir))
    app = FastAPI(title="camscene service", version="0.1.0")
    app.state.store = store

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(CamsceneError)
    async def domain_error_handler(request: Request, exc: CamsceneError):
        return JSONResponse(
            status_code=400,
            content={"code": "validation_error", "message": str(exc), "detail": ""},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "scenes": len(store.sessions)}

    @app.post("/scenes")
    def create_scene(
        image: UploadFile = File(...),
        depth: UploadFile = File(...),
        intrinsics: UploadFile = File(...),
    ):
        session = store.create_scene(image.file.read(), depth.file.read(), intrinsics.file.read())
        return {"scene_id": session.scene_id, "n_points": len(session.cloud), "version": 0}

    @app.get("/scenes/{scene_id}/pointcloud")
    def pointcloud(scene_id: str, max_points: int = 50000, format: str = "json"):
        positions, colors, total, stride = store.pointcloud_payload(scene_id, max_points)
        if format == "binary":
            payload = struct.pack("<I", positions.shape[0])
            payload += positions.astype("<f4").tobytes()
            payload += np.rint(colors * 255).astype(np.uint8).tobytes()
            return Response(
                content=payload,
                media_type="application/octet-stream",
                headers={"X-Total-Points": str(total), "X-Stride": str(stride)},
            )
        if format != "json":
            raise ApiError(400, "bad_format", f"unknown format {format!r}")
        return {
            "positions": positions.tolist(),
            "colors": colors.tolist(),
            "total_points": total,
            "stride": stride,
        }

    @app.get("/scenes/{scene_id}/trajectory")
    def get_trajectory(scene_id: str):
        session = store.get(scene_id)
        with session.lock:
            poses = (
                [_pose_to_doc(p) for p in session.trajectory.poses] if session.trajectory else []
            )
            return {
                "version": session.version,
                "n_frames": session.n_frames,
                "keyframes": [_pose_to_doc(p) for p in session.keyframes],
                "poses": poses,
            }

    @app.put("/scenes/{scene_id}/trajectory")
    def put_trajectory(scene_id: str, body: TrajectoryBody):
        session = store.put_trajectory(scene_id, body.keyframes, body.n_frames)
        return {"version": session.version, "n_frames": session.n_frames}

    @app.get("/scenes/{scene_id}/preview/{frame}")
    def preview(scene_id: str, frame: int, radius: int = DEFAULT_RADIUS):
        png, version = store.preview_png(scene_id, frame, radius)
        return Response(
            content=png, media_type="image/png", headers={"X-Trajectory-Version": str(version)}
        )

    @app.get("/scenes/{scene_id}/masks/{frame}")
    def mask(scene_id: str, frame: int, k: int = DEFAULT_KERNEL, radius: int = DEFAULT_RADIUS):
        pbm, version = store.mask_pbm(scene_id, frame, k, radius)
        return Response(
            content=pbm,
            media_type="image/x-portable-bitmap",
            headers={"X-Trajectory-Version": str(version)},
        )

    @app.post("/scenes/{scene_id}/shape")
    def shape(scene_id: str, body: ShapeBody):
        job = store.submit_shape_job(scene_id, body.model_dump())
        return {"job_id": job.job_id, "status": job.status, "n_frames": job.n_frames}

    @app.get("/scenes/{scene_id}/shape/{job_id}")
    def job_status(scene_id: str, job_id: str):
        job = store.job(scene_id, job_id)
        return {
            "job_id": job.job_id,
            "status": job.status,
            "n_frames": job.n_frames,
            "error": job.error,
        }

    @app.get("/scenes/{scene_id}/shape/{job_id}/frames/{frame}")
    def job_frame(scene_id: str, job_id: str, frame: int):
        return Response(content=store.job_frame(scene_id, job_id, frame), media_type="image/png")

    @app.get("/scenes/{scene_id}/metrics")
    def metrics(scene_id: str, against: str):
        base = store.root.resolve()
        target = (base / against).resolve()
        if not target.is_relative_to(base):
            raise ApiError(400, "bad_path", "comparison path must stay inside the data dir")
        if not target.exists():
            raise ApiError(404, "no_comparison", f"no trajectory file at {against!r}")
        gen = cio.read_trajectory(target)
        return store.metrics_against(scene_id, gen)

    @app.post("/scenes/{scene_id}/metrics")
    def metrics_upload(scene_id: str, body: MetricsBody):
        try:
            gen = cio.trajectory_from_json(body.trajectory)
        except ParseError as e:
            raise ApiError(422, "bad_trajectory", "uploaded trajectory is malformed", str(e))
        return store.metrics_against(scene_id, gen)

    frontend_dir = Path(__file__).resolve().parents[2] / "frontend"
    if (frontend_dir / "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app
