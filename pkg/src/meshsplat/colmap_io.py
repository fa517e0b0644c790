"""COLMAP sparse model I/O: points3D, cameras, images in binary and text.

Binary layouts follow COLMAP's reconstruction serialization (little-endian).
Only the pinhole camera family is supported; anything else raises instead of
being silently skipped. Text numbers are written with 12 significant digits.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingCameraRef,
    DuplicateId,
    TruncatedFile,
    UnsupportedCameraModel,
)

_CAMERA_MODEL_IDS = {0: "SIMPLE_PINHOLE", 1: "PINHOLE"}
_CAMERA_MODEL_NAMES = {v: k for k, v in _CAMERA_MODEL_IDS.items()}
_NUM_PARAMS = {"SIMPLE_PINHOLE": 3, "PINHOLE": 4}


@dataclass(eq=False)
class SparsePoint:
    id: int
    position: np.ndarray      # (3,) float64
    color: np.ndarray         # (3,) uint8
    error: float
    track: list = field(default_factory=list)  # [(image_id, point2d_idx), ...]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.uint8).reshape(3)
        self.error = float(self.error)
        self.track = [(int(a), int(b)) for a, b in self.track]

    def __eq__(self, other):
        return (
            isinstance(other, SparsePoint)
            and self.id == other.id
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.color, other.color)
            and self.error == other.error
            and self.track == other.track
        )


@dataclass(eq=False)
class CameraIntrinsics:
    id: int
    model: str   # SIMPLE_PINHOLE or PINHOLE
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.model not in _NUM_PARAMS:
            raise UnsupportedCameraModel(self.model)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point outside image")

    def __eq__(self, other):
        return isinstance(other, CameraIntrinsics) and (
            (self.id, self.model, self.width, self.height, self.fx, self.fy, self.cx, self.cy)
            == (other.id, other.model, other.width, other.height, other.fx, other.fy, other.cx, other.cy)
        )


@dataclass(eq=False)
class ImagePose:
    """World-to-camera pose: x_cam = R(q) x_world + t."""

    id: int
    rotation: np.ndarray      # (4,) unit quaternion w,x,y,z
    translation: np.ndarray   # (3,)
    camera_id: int
    name: str

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise ValueError(f"quaternion not unit length: {self.rotation}")

    def __eq__(self, other):
        return (
            isinstance(other, ImagePose)
            and self.id == other.id
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.camera_id == other.camera_id
            and self.name == other.name
        )


@dataclass(eq=True)
class SparseModel:
    points: dict    # id -> SparsePoint
    cameras: dict   # id -> CameraIntrinsics
    images: dict    # id -> ImagePose

    def __post_init__(self):
        for image in self.images.values():
            if image.camera_id not in self.cameras:
                raise DanglingCameraRef(
                    f"image {image.id} references missing camera {image.camera_id}"
                )


# ---------------------------------------------------------------------------
# binary readers
# ---------------------------------------------------------------------------

def _unpack(fmt: str, data: bytes, offset: int, what: str):
    size = struct.calcsize("<" + fmt)
    if len(data) - offset < size:
        raise TruncatedFile(f"{what}: need {size} bytes at offset {offset}")
    return struct.unpack_from("<" + fmt, data, offset), offset + size


def read_points3d_binary(data: bytes) -> dict:
    (count,), offset = _unpack("Q", data, 0, "points3D count")
    points = {}
    for _ in range(count):
        vals, offset = _unpack("QdddBBBd", data, offset, "point record")
        pid = vals[0]
        (track_len,), offset = _unpack("Q", data, offset, "track length")
        track_vals, offset = _unpack("II" * track_len, data, offset, "track")
        points[pid] = SparsePoint(
            id=pid,
            position=np.array(vals[1:4]),
            color=np.array(vals[4:7]),
            error=vals[7],
            track=list(zip(track_vals[0::2], track_vals[1::2])),
        )
    return points


def read_cameras_binary(data: bytes) -> dict:
    (count,), offset = _unpack("Q", data, 0, "camera count")
    cameras = {}
    for _ in range(count):
        (cam_id, model_id, width, height), offset = _unpack("iiQQ", data, offset, "camera record")
        if model_id not in _CAMERA_MODEL_IDS:
            raise UnsupportedCameraModel(f"camera model id {model_id}")
        model = _CAMERA_MODEL_IDS[model_id]
        nparams = _NUM_PARAMS[model]
        params, offset = _unpack("d" * nparams, data, offset, "camera params")
        cameras[cam_id] = _camera_from_params(cam_id, model, width, height, params)
    return cameras


def read_images_binary(data: bytes) -> dict:
    (count,), offset = _unpack("Q", data, 0, "image count")
    images = {}
    for _ in range(count):
        vals, offset = _unpack("idddddddi", data, offset, "image record")
        image_id = vals[0]
        qvec = np.array(vals[1:5])
        tvec = np.array(vals[5:8])
        camera_id = vals[8]
        end = data.find(b"\x00", offset)
        if end < 0:
            raise TruncatedFile("unterminated image name")
        name = data[offset:end].decode("utf-8")
        offset = end + 1
        (num2d,), offset = _unpack("Q", data, offset, "points2D count")
        # observations not kept; skip 2 doubles + 1 int64 per 2D point
        skip = 24 * num2d
        if len(data) - offset < skip:
            raise TruncatedFile("short points2D block")
        offset += skip
        images[image_id] = ImagePose(
            id=image_id, rotation=qvec, translation=tvec, camera_id=camera_id, name=name
        )
    return images


# ---------------------------------------------------------------------------
# text readers
# ---------------------------------------------------------------------------

def _text_lines(data: bytes):
    return [
        line.strip()
        for line in data.decode("utf-8").splitlines()
    ]


def read_points3d_text(data: bytes) -> dict:
    points = {}
    for line in _text_lines(data):
        if not line or line.startswith("#"):
            continue
        elems = line.split()
        pid = int(elems[0])
        points[pid] = SparsePoint(
            id=pid,
            position=np.array(list(map(float, elems[1:4]))),
            color=np.array(list(map(int, elems[4:7]))),
            error=float(elems[7]),
            track=list(zip(map(int, elems[8::2]), map(int, elems[9::2]))),
        )
    return points


def read_cameras_text(data: bytes) -> dict:
    cameras = {}
    for line in _text_lines(data):
        if not line or line.startswith("#"):
            continue
        elems = line.split()
        cam_id = int(elems[0])
        model = elems[1]
        if model not in _NUM_PARAMS:
            raise UnsupportedCameraModel(model)
        params = tuple(map(float, elems[4:]))
        if len(params) != _NUM_PARAMS[model]:
            raise TruncatedFile(f"camera {cam_id}: wrong parameter count")
        cameras[cam_id] = _camera_from_params(cam_id, model, int(elems[2]), int(elems[3]), params)
    return cameras


def read_images_text(data: bytes) -> dict:
    images = {}
    lines = _text_lines(data)
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line.startswith("#"):
            continue
        elems = line.split()
        if len(elems) < 10:
            raise TruncatedFile(f"short image pose line: {line!r}")
        image_id = int(elems[0])
        qvec = np.array(list(map(float, elems[1:5])))
        tvec = np.array(list(map(float, elems[5:8])))
        images[image_id] = ImagePose(
            id=image_id,
            rotation=qvec,
            translation=tvec,
            camera_id=int(elems[8]),
            name=elems[9],
        )
        if i >= len(lines):
            raise TruncatedFile(f"image {image_id}: missing points2D line")
        i += 1  # observations line (may be empty); content not kept
    return images


def _camera_from_params(cam_id, model, width, height, params) -> CameraIntrinsics:
    if model == "SIMPLE_PINHOLE":
        f, cx, cy = params
        fx = fy = f
    else:
        fx, fy, cx, cy = params
    return CameraIntrinsics(
        id=cam_id, model=model, width=int(width), height=int(height),
        fx=fx, fy=fy, cx=cx, cy=cy,
    )


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _g12(x: float) -> str:
    return f"{float(x):.12g}"


def write_points3d(points, format: str = "binary") -> bytes:
    """Serialize SparsePoints; binary round-trips bit-exactly through the reader."""
    seen = set()
    for p in points:
        if p.id in seen:
            raise DuplicateId(f"point id {p.id}")
        seen.add(p.id)

    if format == "binary":
        parts = [struct.pack("<Q", len(points))]
        for p in points:
            parts.append(struct.pack(
                "<QdddBBBd", p.id, *p.position, *(int(c) for c in p.color), p.error,
            ))
            parts.append(struct.pack("<Q", len(p.track)))
            for image_id, idx2d in p.track:
                parts.append(struct.pack("<II", image_id, idx2d))
        return b"".join(parts)

    lines = ["# 3D point list: POINT3D_ID X Y Z R G B ERROR TRACK[] as (IMAGE_ID POINT2D_IDX)"]
    for p in points:
        fields = [str(p.id)] + [_g12(v) for v in p.position]
        fields += [str(int(c)) for c in p.color] + [_g12(p.error)]
        for image_id, idx2d in p.track:
            fields += [str(image_id), str(idx2d)]
        lines.append(" ".join(fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


# packed record of a track-free binary point (id, xyz, rgb, error, track_len=0)
_TRACKLESS_DTYPE = np.dtype([
    ("id", "<u8"), ("xyz", "<f8", 3), ("rgb", "u1", 3),
    ("error", "<f8"), ("track_len", "<u8"),
])


def write_points3d_trackless(ids, positions, colors, errors) -> bytes:
    """Vectorized binary points3D writer for synthetic points with empty tracks.

    Byte-identical to write_points3d on the same records; avoids per-point
    object construction when dumping merged million-point clouds.
    """
    ids = np.asarray(ids, dtype=np.uint64)
    n = len(ids)
    if len(np.unique(ids)) != n:
        raise DuplicateId("point ids must be unique")
    rows = np.empty(n, dtype=_TRACKLESS_DTYPE)
    rows["id"] = ids
    rows["xyz"] = np.asarray(positions, dtype=np.float64).reshape(n, 3)
    rows["rgb"] = np.asarray(colors, dtype=np.uint8).reshape(n, 3)
    rows["error"] = np.asarray(errors, dtype=np.float64).reshape(n)
    rows["track_len"] = 0
    return struct.pack("<Q", n) + rows.tobytes()


def write_cameras(cameras, format: str = "binary") -> bytes:
    seen = set()
    for cam in cameras:
        if cam.id in seen:
            raise DuplicateId(f"camera id {cam.id}")
        seen.add(cam.id)

    def params_of(cam):
        if cam.model == "SIMPLE_PINHOLE":
            if cam.fx != cam.fy:
                raise ValueError("SIMPLE_PINHOLE requires fx == fy")
            return (cam.fx, cam.cx, cam.cy)
        return (cam.fx, cam.fy, cam.cx, cam.cy)

    if format == "binary":
        parts = [struct.pack("<Q", len(cameras))]
        for cam in cameras:
            params = params_of(cam)
            parts.append(struct.pack("<iiQQ", cam.id, _CAMERA_MODEL_NAMES[cam.model],
                                     cam.width, cam.height))
            parts.append(struct.pack("<" + "d" * len(params), *params))
        return b"".join(parts)

    lines = ["# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"]
    for cam in cameras:
        params = params_of(cam)
        lines.append(" ".join(
            [str(cam.id), cam.model, str(cam.width), str(cam.height)]
            + [_g12(p) for p in params]
        ))
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_images(images, format: str = "binary") -> bytes:
    """Image poses without 2D observations (zero points2D per image)."""
    seen = set()
    for im in images:
        if im.id in seen:
            raise DuplicateId(f"image id {im.id}")
        seen.add(im.id)

    if format == "binary":
        parts = [struct.pack("<Q", len(images))]
        for im in images:
            parts.append(struct.pack(
                "<idddddddi", im.id, *im.rotation, *im.translation, im.camera_id,
            ))
            parts.append(im.name.encode("utf-8") + b"\x00")
            parts.append(struct.pack("<Q", 0))
        return b"".join(parts)

    lines = ["# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME / POINTS2D[]"]
    for im in images:
        pose = [str(im.id)] + [_g12(v) for v in im.rotation] + [_g12(v) for v in im.translation]
        pose += [str(im.camera_id), im.name]
        lines.append(" ".join(pose))
        lines.append("")  # no observations
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# model-level API
# ---------------------------------------------------------------------------

def read_sparse_model(points_bytes: bytes, cameras_bytes: bytes, images_bytes: bytes,
                      format: str = "binary") -> SparseModel:
    if format == "binary":
        points = read_points3d_binary(points_bytes)
        cameras = read_cameras_binary(cameras_bytes)
        images = read_images_binary(images_bytes)
    elif format == "text":
        points = read_points3d_text(points_bytes)
        cameras = read_cameras_text(cameras_bytes)
        images = read_images_text(images_bytes)
    else:
        raise ValueError(f"unknown format {format!r}")
    return SparseModel(points=points, cameras=cameras, images=images)


def load_sparse_dir(path) -> SparseModel:
    """Load a COLMAP sparse model directory, preferring .bin over .txt."""
    from pathlib import Path

    path = Path(path)
    names = ("points3D", "cameras", "images")
    if all((path / f"{n}.bin").is_file() for n in names):
        blobs = [(path / f"{n}.bin").read_bytes() for n in names]
        return read_sparse_model(*blobs, format="binary")
    if all((path / f"{n}.txt").is_file() for n in names):
        blobs = [(path / f"{n}.txt").read_bytes() for n in names]
        return read_sparse_model(*blobs, format="text")
    raise FileNotFoundError(f"no complete sparse model (bin or txt) in {path}")
