"""Similarity transforms: apply, estimate from correspondences, merge clouds.

The convention throughout is that the mesh-sampled cloud is transformed into
the COLMAP world frame (where the camera poses live). Estimation uses the
Umeyama closed form; reflections are rejected since a mirrored building is
never a valid registration.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    ReflectionDetected,
    TooFewCorrespondences,
)
from .mesh_io import PointCloud
from .rotations import normalize_quaternion, qvec2rotmat, quat_multiply, rotmat2qvec


@dataclass(eq=False)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray      # (4,) unit quaternion w,x,y,z
    translation: np.ndarray   # (3,)

    def __post_init__(self):
        self.scale = float(self.scale)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise ValueError("rotation quaternion must be unit length")
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(scale=1.0, rotation=np.array([1.0, 0.0, 0.0, 0.0]), translation=np.zeros(3))

    def is_identity(self) -> bool:
        return (
            self.scale == 1.0
            and np.array_equal(self.rotation, [1.0, 0.0, 0.0, 0.0])
            and np.array_equal(self.translation, [0.0, 0.0, 0.0])
        )

    @property
    def rotation_matrix(self) -> np.ndarray:
        return qvec2rotmat(self.rotation)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * (points @ self.rotation_matrix.T) + self.translation

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation_matrix
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m) -> "SimilarityTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        a = m[:3, :3]
        det = np.linalg.det(a)
        if det <= 0:
            raise ReflectionDetected("matrix has non-positive determinant")
        scale = det ** (1.0 / 3.0)
        r = a / scale
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-4:
            raise ValueError("upper 3x3 block is not scale * rotation")
        return cls(scale=scale, rotation=rotmat2qvec(r), translation=m[:3, 3])

    def to_json(self) -> str:
        return json.dumps({
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        })

    def to_matrix_text(self) -> str:
        """16 whitespace-separated row-major entries, for DCC tool interop."""
        return " ".join(repr(float(v)) for v in self.to_matrix().ravel()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SimilarityTransform":
        doc = json.loads(text)
        return cls(
            scale=doc["scale"],
            rotation=normalize_quaternion(doc["rotation"]),
            translation=np.asarray(doc["translation"], dtype=np.float64),
        )

    def __eq__(self, other):
        return (
            isinstance(other, SimilarityTransform)
            and self.scale == other.scale
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


def compose(outer: SimilarityTransform, inner: SimilarityTransform) -> SimilarityTransform:
    """Transform equivalent to applying inner first, then outer."""
    rotation = normalize_quaternion(quat_multiply(outer.rotation, inner.rotation))
    translation = outer.scale * (outer.rotation_matrix @ inner.translation) + outer.translation
    return SimilarityTransform(
        scale=outer.scale * inner.scale, rotation=rotation, translation=translation
    )


def load_transform(path) -> SimilarityTransform:
    """Load a transform file: .json document or 16-number row-major matrix text."""
    from pathlib import Path

    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return SimilarityTransform.from_json(text)
    values = np.array(text.split(), dtype=np.float64)
    if values.size != 16:
        raise ValueError(f"{path}: expected 16 matrix entries, got {values.size}")
    return SimilarityTransform.from_matrix(values.reshape(4, 4))


def apply_similarity(cloud: PointCloud, t: SimilarityTransform) -> PointCloud:
    """p -> scale * R p + translation; normals rotated and re-normalized."""
    if t.is_identity():
        return PointCloud(
            positions=cloud.positions.copy(),
            colors=cloud.colors.copy(),
            normals=cloud.normals.copy(),
        )
    positions = t.transform_points(cloud.positions.astype(np.float64))
    normals = cloud.normals.astype(np.float64) @ t.rotation_matrix.T
    norms = np.linalg.norm(normals, axis=1)
    nz = norms > 0
    normals[nz] /= norms[nz, None]
    return PointCloud(
        positions=positions.astype(np.float32),
        colors=cloud.colors.copy(),
        normals=normals.astype(np.float32),
    )


def estimate_similarity(source, target):
    """Least-squares similarity taking source points onto target points.

    Umeyama closed form: centroids, covariance of the centered sets, SVD.
    Returns (transform, residual RMS). Raises when fewer than 3 pairs are
    given, when the sources are collinear, or when the best orthogonal fit
    is a reflection.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if source.shape != target.shape:
        raise ValueError("source and target must have the same shape")
    n = len(source)
    if n < 3:
        raise TooFewCorrespondences(f"need >= 3 pairs, got {n}")

    mu_src = source.mean(axis=0)
    mu_dst = target.mean(axis=0)
    src_c = source - mu_src
    dst_c = target - mu_dst

    sv_src = np.linalg.svd(src_c, compute_uv=False)
    if sv_src[1] <= max(1e-12, 1e-9 * sv_src[0]):
        raise DegenerateConfiguration("source points are collinear")

    cov = dst_c.T @ src_c / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.linalg.det(u) * np.linalg.det(vt)
    s = np.ones(3)
    if sign < 0:
        if d[2] > 1e-9 * d[0]:
            raise ReflectionDetected("correspondences require a reflection")
        # rank-deficient (coplanar) data: the standard determinant correction
        # still yields the optimal proper rotation
        s[2] = -1.0
    rot = u @ np.diag(s) @ vt

    var_src = (src_c ** 2).sum() / n
    scale = float((d * s).sum() / var_src)
    if scale <= 0:
        raise DegenerateConfiguration("non-positive estimated scale")
    translation = mu_dst - scale * rot @ mu_src

    transform = SimilarityTransform(
        scale=scale,
        rotation=normalize_quaternion(rotmat2qvec(rot)),
        translation=translation,
    )
    residual = transform.transform_points(source) - target
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    return transform, rms


def merge_clouds(sampled: PointCloud, sfm: PointCloud) -> PointCloud:
    """Concatenate with SfM points first; no deduplication or resampling."""
    return PointCloud(
        positions=np.concatenate([sfm.positions, sampled.positions]),
        colors=np.concatenate([sfm.colors, sampled.colors]),
        normals=np.concatenate([sfm.normals, sampled.normals]),
    )
