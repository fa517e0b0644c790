import numpy as np
import pytest

from meshsplat import colmap_io, mesh_io


def make_ascii_ply(vertices, faces) -> bytes:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in vertices:
        lines.append(f"{v[0]} {v[1]} {v[2]}")
    for f in faces:
        lines.append(str(len(f)) + " " + " ".join(str(i) for i in f))
    return ("\n".join(lines) + "\n").encode("ascii")


def random_cloud(rng: np.random.Generator, n: int) -> mesh_io.PointCloud:
    positions = rng.standard_normal((n, 3)).astype(np.float32)
    colors = rng.integers(0, 256, size=(n, 3), dtype=np.int64).astype(np.uint8)
    normals64 = rng.standard_normal((n, 3))
    normals64 /= np.linalg.norm(normals64, axis=1, keepdims=True)
    normals = normals64.astype(np.float32)
    normals[rng.random(n) < 0.2] = 0.0  # some unoriented points
    return mesh_io.PointCloud(positions=positions, colors=colors, normals=normals)


def strip_mesh(num_triangles: int) -> mesh_io.TriangleMesh:
    """Flat triangle strip with the requested face count (all non-degenerate)."""
    cols = num_triangles // 2 + 1
    vertices = []
    for i in range(cols + 1):
        vertices.append((float(i), 0.0, 0.0))
        vertices.append((float(i), 1.0, 0.0))
    faces = []
    for i in range(cols):
        a, b, c, d = 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3
        faces.append((a, b, c))
        if len(faces) < num_triangles:
            faces.append((b, d, c))
    faces = faces[:num_triangles]
    return mesh_io.TriangleMesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        faces=np.asarray(faces, dtype=np.int64),
    )


TETRA_VERTICES = [
    (0.0, 0.0, 0.0),
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
]
TETRA_FACES = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]


@pytest.fixture
def tetra_ply() -> bytes:
    return make_ascii_ply(TETRA_VERTICES, TETRA_FACES)


def make_fixture_model() -> colmap_io.SparseModel:
    """Small COLMAP model: one pinhole camera, two poses, 40 colored points."""
    camera = colmap_io.CameraIntrinsics(
        id=1, model="PINHOLE", width=64, height=48, fx=50.0, fy=50.0, cx=32.0, cy=24.0
    )
    images = {
        1: colmap_io.ImagePose(
            id=1, rotation=[1.0, 0.0, 0.0, 0.0], translation=[0.0, 0.0, 4.0],
            camera_id=1, name="view_a.png",
        ),
        2: colmap_io.ImagePose(
            id=2, rotation=[1.0, 0.0, 0.0, 0.0], translation=[0.25, 0.0, 4.5],
            camera_id=1, name="view_b.png",
        ),
    }
    rng = np.random.default_rng(7)
    points = {}
    for pid in range(1, 41):
        points[pid] = colmap_io.SparsePoint(
            id=pid,
            position=rng.uniform(-0.5, 1.0, size=3),
            color=rng.integers(0, 256, size=3),
            error=float(rng.uniform(0.1, 2.0)),
            track=[(1, pid), (2, pid)],
        )
    return colmap_io.SparseModel(points=points, cameras={1: camera}, images=images)


def write_model_dir(model: colmap_io.SparseModel, path):
    path.mkdir(parents=True, exist_ok=True)
    ids = sorted(model.points)
    (path / "points3D.bin").write_bytes(
        colmap_io.write_points3d([model.points[i] for i in ids]))
    (path / "cameras.bin").write_bytes(
        colmap_io.write_cameras([model.cameras[i] for i in sorted(model.cameras)]))
    (path / "images.bin").write_bytes(
        colmap_io.write_images([model.images[i] for i in sorted(model.images)]))


def write_fixture_images(images_dir):
    """Two small photos dominated by three colors."""
    from PIL import Image

    images_dir.mkdir(parents=True, exist_ok=True)
    a = np.zeros((48, 64, 3), dtype=np.uint8)
    a[:, :40] = (200, 40, 30)     # brick red
    a[:, 40:] = (90, 120, 200)    # sky blue
    b = np.zeros((48, 64, 3), dtype=np.uint8)
    b[:24] = (90, 120, 200)
    b[24:] = (230, 230, 220)      # plaster white
    Image.fromarray(a).save(images_dir / "view_a.png")
    Image.fromarray(b).save(images_dir / "view_b.png")


@pytest.fixture
def fixture_workspace(tmp_path):
    """Mesh + images + COLMAP model + identity transform on disk."""
    mesh_path = tmp_path / "building.ply"
    mesh_path.write_bytes(make_ascii_ply(TETRA_VERTICES, TETRA_FACES))
    images_dir = tmp_path / "images"
    write_fixture_images(images_dir)
    model = make_fixture_model()
    sparse_dir = tmp_path / "sparse"
    write_model_dir(model, sparse_dir)
    transform_path = tmp_path / "transform.json"
    transform_path.write_text(
        '{"scale": 1.0, "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.0, 0.0, 0.0]}'
    )
    return {
        "root": tmp_path,
        "mesh": mesh_path,
        "images": images_dir,
        "sparse": sparse_dir,
        "transform": transform_path,
        "model": model,
    }
