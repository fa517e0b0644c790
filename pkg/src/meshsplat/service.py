"""Local HTTP service backing the browser alignment tool.

One in-memory session per process: both clouds (decimated for display), the
current similarity transform, and the picked correspondences. Mutations are
serialized through a lock; finalize runs the same merge code as the CLI, so
the written artifacts are byte-identical. No state survives a restart except
the written files.
"""

import io
import struct
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import colmap_io, mesh_io, pipeline, registration, splat_preview
from .errors import BehindCamera, MeshSplatError

MAX_DISPLAY_POINTS = 200_000


class TransformDoc(BaseModel):
    scale: float
    rotation: list[float]
    translation: list[float]


class CorrespondenceOp(BaseModel):
    action: str                         # add | remove | clear
    source: list[float] | None = None   # sampled-cloud point (mesh frame)
    target: list[float] | None = None   # sfm-cloud point (world frame)
    index: int | None = None


@dataclass
class AlignmentSession:
    session_id: str
    sampled_full: mesh_io.PointCloud     # mesh frame, full resolution
    sfm_full: mesh_io.PointCloud         # world frame
    sampled_display: mesh_io.PointCloud
    sfm_display: mesh_io.PointCloud
    model: colmap_io.SparseModel
    transform: registration.SimilarityTransform
    correspondences: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def decimate(cloud: mesh_io.PointCloud, limit: int = MAX_DISPLAY_POINTS) -> mesh_io.PointCloud:
    """Deterministic stride decimation to at most `limit` points."""
    n = len(cloud)
    if n <= limit:
        return cloud
    stride = -(-n // limit)   # ceil
    idx = np.arange(0, n, stride)
    return mesh_io.PointCloud(
        positions=cloud.positions[idx],
        colors=cloud.colors[idx],
        normals=cloud.normals[idx],
    )


def cloud_to_wire(cloud: mesh_io.PointCloud) -> bytes:
    """Little-endian u32 count, then count * (3 x f32 position + 3 x u8 color)."""
    record = np.dtype([("pos", "<f4", 3), ("rgb", "u1", 3)])
    rows = np.empty(len(cloud), dtype=record)
    rows["pos"] = cloud.positions
    rows["rgb"] = cloud.colors
    return struct.pack("<I", len(cloud)) + rows.tobytes()


def _transform_to_doc(t: registration.SimilarityTransform) -> dict:
    return {
        "scale": t.scale,
        "rotation": t.rotation.tolist(),
        "translation": t.translation.tolist(),
    }


def build_session(config: pipeline.PipelineConfig) -> AlignmentSession:
    config.validate()
    sampling = pipeline.sample_and_color(config)
    model = colmap_io.load_sparse_dir(config.colmap_dir)
    sfm = pipeline.sfm_cloud_from_model(model)
    transform = pipeline.load_transform_or_identity(config.transform_path)
    return AlignmentSession(
        session_id=uuid.uuid4().hex,
        sampled_full=sampling.cloud,
        sfm_full=sfm,
        sampled_display=decimate(sampling.cloud),
        sfm_display=decimate(sfm),
        model=model,
        transform=transform,
    )


def create_app(config: pipeline.PipelineConfig) -> FastAPI:
    session = build_session(config)
    app = FastAPI(title="meshsplat alignment service")
    app.state.session = session
    app.state.config = config

    @app.exception_handler(MeshSplatError)
    async def _domain_error(request: Request, exc: MeshSplatError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        # never leak tracebacks to the client
        return JSONResponse(status_code=500, content={"error": "internal error"})

    @app.get("/session")
    def get_session():
        return {
            "session_id": session.session_id,
            "transform": _transform_to_doc(session.transform),
            "clouds": {
                "sampled": {
                    "points": len(session.sampled_display),
                    "url": "/session/cloud/sampled",
                },
                "sfm": {
                    "points": len(session.sfm_display),
                    "url": "/session/cloud/sfm",
                },
            },
            "correspondences": [
                {"source": list(s), "target": list(t)}
                for s, t in session.correspondences
            ],
        }

    @app.get("/session/cloud/{name}")
    def get_cloud(name: str):
        if name == "sampled":
            cloud = session.sampled_display
        elif name == "sfm":
            cloud = session.sfm_display
        else:
            raise HTTPException(status_code=404, detail="unknown cloud")
        return Response(content=cloud_to_wire(cloud), media_type="application/octet-stream")

    @app.put("/session/transform")
    def put_transform(doc: TransformDoc):
        try:
            transform = registration.SimilarityTransform(
                scale=doc.scale,
                rotation=np.asarray(doc.rotation, dtype=np.float64),
                translation=np.asarray(doc.translation, dtype=np.float64),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        with session.lock:
            session.transform = transform
        return {"transform": _transform_to_doc(transform)}

    @app.post("/session/correspondences")
    def post_correspondences(op: CorrespondenceOp):
        with session.lock:
            if op.action == "add":
                if op.source is None or op.target is None:
                    raise HTTPException(status_code=400, detail="add needs source and target")
                if len(op.source) != 3 or len(op.target) != 3:
                    raise HTTPException(status_code=400, detail="points must have 3 coordinates")
                session.correspondences.append((tuple(op.source), tuple(op.target)))
            elif op.action == "remove":
                if op.index is None or not 0 <= op.index < len(session.correspondences):
                    raise HTTPException(status_code=400, detail="bad correspondence index")
                session.correspondences.pop(op.index)
            elif op.action == "clear":
                session.correspondences.clear()
            else:
                raise HTTPException(status_code=400, detail=f"unknown action {op.action!r}")
            pairs = list(session.correspondences)
        return {"correspondences": [
            {"source": list(s), "target": list(t)} for s, t in pairs
        ]}

    @app.post("/session/estimate")
    def post_estimate():
        with session.lock:
            pairs = list(session.correspondences)
        if len(pairs) < 3:
            raise HTTPException(status_code=409, detail="need at least 3 correspondences")
        source = np.array([p[0] for p in pairs])
        target = np.array([p[1] for p in pairs])
        transform, rms = registration.estimate_similarity(source, target)
        # proposal only; the client applies it via PUT /session/transform
        return {"transform": _transform_to_doc(transform), "residual_rms": rms}

    @app.post("/session/merge")
    def post_merge():
        with session.lock:
            transform = session.transform
        cfg = app.state.config
        out = pipeline.finalize_merge(
            session.sampled_full, session.sfm_full, transform,
            cfg.out_ply, cfg.out_points3d,
        )
        return {"artifacts": out["artifacts"], "points": len(out["merged"])}

    @app.get("/session/preview")
    def get_preview(image_id: int = Query(...)):
        if image_id not in session.model.images:
            raise HTTPException(status_code=404, detail=f"no image with id {image_id}")
        pose = session.model.images[image_id]
        intr = session.model.cameras[pose.camera_id]
        camera = splat_preview.PreviewCamera(intrinsics=intr, pose=pose)
        with session.lock:
            transform = session.transform
        merged = registration.merge_clouds(
            registration.apply_similarity(session.sampled_display, transform),
            session.sfm_display,
        )
        gaussians = splat_preview.init_gaussians(merged)
        try:
            image = splat_preview.render_preview(gaussians, camera, intr.width, intr.height)
        except BehindCamera as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    return app


def serve_api(config: pipeline.PipelineConfig, host: str = "127.0.0.1", port: int = 8731):
    """Run the alignment service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
