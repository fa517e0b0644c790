"""Reference CPU renderer for Gaussian initializations.

Projects 3D Gaussians (covariance R S S^T R^T) through a pinhole camera via
the affine perspective Jacobian and alpha-blends them by depth. Built for
verification of initializations, not speed: a few hundred thousand Gaussians
at small resolutions render in seconds.

Blending semantics (which any oracle must share):
  - Gaussians behind the near plane (camera z <= 0.01) are culled.
  - Sort by camera depth ascending; ties keep input order.
  - Pixel p is sampled at integer coordinates (x = column, y = row).
  - Effective alpha a_i(p) = min(opacity_i * G'_i(p), 0.99), forced to 0
    where opacity_i * G'_i(p) < 1/255; G' is the unnormalized 2D Gaussian
    (peak 1 at the projected mean) under the dilated 2D covariance.
  - Front to back: C += color_i * a_i * T; T *= (1 - a_i); a pixel stops
    accepting contributions once T < 1e-4.
  - Finally C += T * background.
"""

from dataclasses import dataclass

import numpy as np

from .colmap_io import CameraIntrinsics, ImagePose
from .errors import BehindCamera, EmptyCloud
from .mesh_io import PointCloud
from .rotations import qvec2rotmat

Z_NEAR = 0.01
COV_DILATION = 0.3            # pixels^2 added to the projected covariance
ALPHA_CLAMP = 0.99
ALPHA_SKIP = 1.0 / 255.0
TRANSMITTANCE_FLOOR = 1e-4
DEFAULT_OPACITY = 0.1
SCALE_FLOOR = 1e-7


@dataclass(eq=False)
class GaussianSet:
    """Column-wise storage of N Gaussians (means, scales, rotations, opacities, colors)."""

    means: np.ndarray      # (N, 3) float64
    scales: np.ndarray     # (N, 3) float64, positive
    rotations: np.ndarray  # (N, 4) unit quaternions w,x,y,z
    opacities: np.ndarray  # (N,) in [0, 1)
    colors: np.ndarray     # (N, 3) in [0, 1]

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)
        if n:
            if self.scales.min() <= 0:
                raise ValueError("scales must be positive")
            if self.opacities.min() < 0 or self.opacities.max() >= 1:
                raise ValueError("opacities must lie in [0, 1)")
            norms = np.linalg.norm(self.rotations, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError("rotations must be unit quaternions")

    def __len__(self) -> int:
        return len(self.means)


@dataclass
class PreviewCamera:
    intrinsics: CameraIntrinsics
    pose: ImagePose

    @property
    def rotation(self) -> np.ndarray:
        return qvec2rotmat(self.pose.rotation)

    @property
    def translation(self) -> np.ndarray:
        return self.pose.translation


def init_gaussians(cloud: PointCloud) -> GaussianSet:
    """One isotropic Gaussian per point.

    Scale is the mean distance to the 3 nearest neighbors (fewer if the cloud
    is smaller; zero neighbors means 0), clamped to at least 1e-7. Opacity is
    0.1, color is the point color / 255, rotation identity.
    """
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("cannot initialize Gaussians from an empty cloud")
    positions = cloud.positions.astype(np.float64)
    if n == 1:
        iso = np.zeros(1)
    else:
        from scipy.spatial import cKDTree

        k = min(4, n)
        dists, _ = cKDTree(positions).query(positions, k=k)
        iso = dists[:, 1:].mean(axis=1)
    iso = np.maximum(iso, SCALE_FLOOR)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    return GaussianSet(
        means=positions,
        scales=np.repeat(iso[:, None], 3, axis=1),
        rotations=rotations,
        opacities=np.full(n, DEFAULT_OPACITY),
        colors=cloud.colors.astype(np.float64) / 255.0,
    )


def covariance_3d(scale, rotation) -> np.ndarray:
    """World-space covariance R diag(s)^2 R^T; symmetric positive definite."""
    scale = np.asarray(scale, dtype=np.float64).reshape(3)
    if scale.min() <= 0:
        raise ValueError("scales must be positive")
    m = qvec2rotmat(rotation) * scale[None, :]
    return m @ m.T


def _batch_covariances(gaussians: GaussianSet) -> np.ndarray:
    q = gaussians.rotations
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rot = np.empty((len(gaussians), 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (z * x + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (z * x - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    m = rot * gaussians.scales[:, None, :]
    return m @ m.transpose(0, 2, 1)


def project_gaussian(cov3d, mean, camera: PreviewCamera):
    """Project one Gaussian; returns (mean2d, cov2d, depth).

    cov2d = J R cov3d R^T J^T + 0.3 I with J the 2x3 perspective Jacobian and
    R the rotation block of the world-to-camera transform; the dilation keeps
    sub-pixel Gaussians from aliasing away.
    """
    cov3d = np.asarray(cov3d, dtype=np.float64).reshape(3, 3)
    mean = np.asarray(mean, dtype=np.float64).reshape(3)
    rot = camera.rotation
    t = rot @ mean + camera.translation
    if t[2] <= Z_NEAR:
        raise BehindCamera(f"camera-space z = {t[2]:.4g}")
    intr = camera.intrinsics
    tz = t[2]
    jac = np.array([
        [intr.fx / tz, 0.0, -intr.fx * t[0] / tz ** 2],
        [0.0, intr.fy / tz, -intr.fy * t[1] / tz ** 2],
    ])
    cov_cam = rot @ cov3d @ rot.T
    cov2d = jac @ cov_cam @ jac.T + COV_DILATION * np.eye(2)
    mean2d = np.array([intr.fx * t[0] / tz + intr.cx, intr.fy * t[1] / tz + intr.cy])
    return mean2d, cov2d, float(tz)


def _project_all(gaussians: GaussianSet, camera: PreviewCamera):
    """Vectorized projection; returns (mean2d, cov2d, depth, in_front mask)."""
    rot = camera.rotation
    t = gaussians.means @ rot.T + camera.translation
    depth = t[:, 2]
    valid = depth > Z_NEAR
    tz = np.where(valid, depth, 1.0)
    intr = camera.intrinsics
    jac = np.zeros((len(gaussians), 2, 3))
    jac[:, 0, 0] = intr.fx / tz
    jac[:, 0, 2] = -intr.fx * t[:, 0] / tz ** 2
    jac[:, 1, 1] = intr.fy / tz
    jac[:, 1, 2] = -intr.fy * t[:, 1] / tz ** 2
    cov_cam = np.einsum("ij,njk,lk->nil", rot, _batch_covariances(gaussians), rot)
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += COV_DILATION
    cov2d[:, 1, 1] += COV_DILATION
    mean2d = np.column_stack([
        intr.fx * t[:, 0] / tz + intr.cx,
        intr.fy * t[:, 1] / tz + intr.cy,
    ])
    return mean2d, cov2d, depth, valid


def render_gaussians(
    gaussians: GaussianSet,
    camera: PreviewCamera,
    width: int,
    height: int,
    background=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """Float image (height, width, 3) under the module's blending semantics.

    Each Gaussian touches only an axis-aligned box around its projected mean;
    the box radius covers both the 3-sigma ellipse and the support of the
    1/255 skip rule, so pixels outside the box provably contribute nothing.
    """
    background = np.asarray(background, dtype=np.float64).reshape(3)
    image = np.zeros((height, width, 3), dtype=np.float64)
    transmittance = np.ones((height, width), dtype=np.float64)

    if len(gaussians):
        mean2d, cov2d, depth, valid = _project_all(gaussians, camera)
        order = np.argsort(depth, kind="stable")
        order = order[valid[order]]

        xs_full = np.arange(width, dtype=np.float64)
        ys_full = np.arange(height, dtype=np.float64)

        for i in order:
            opacity = gaussians.opacities[i]
            if opacity * 255.0 <= 1.0:
                continue  # skip rule can never pass
            radius = max(3.0, np.sqrt(2.0 * np.log(255.0 * opacity)))
            cov = cov2d[i]
            mx, my = mean2d[i]
            rx = radius * np.sqrt(cov[0, 0])
            ry = radius * np.sqrt(cov[1, 1])
            x0 = max(int(np.ceil(mx - rx)), 0)
            x1 = min(int(np.floor(mx + rx)), width - 1)
            y0 = max(int(np.ceil(my - ry)), 0)
            y1 = min(int(np.floor(my + ry)), height - 1)
            if x0 > x1 or y0 > y1:
                continue

            det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
            ia = cov[1, 1] / det
            ib = -cov[0, 1] / det
            ic = cov[0, 0] / det
            dx = xs_full[x0:x1 + 1] - mx
            dy = ys_full[y0:y1 + 1] - my
            quad = (
                ia * dx[None, :] ** 2
                + 2.0 * ib * dy[:, None] * dx[None, :]
                + ic * dy[:, None] ** 2
            )
            alpha = opacity * np.exp(-0.5 * quad)
            alpha[alpha < ALPHA_SKIP] = 0.0
            np.minimum(alpha, ALPHA_CLAMP, out=alpha)

            t_patch = transmittance[y0:y1 + 1, x0:x1 + 1]
            alpha[t_patch < TRANSMITTANCE_FLOOR] = 0.0
            weight = alpha * t_patch
            image[y0:y1 + 1, x0:x1 + 1] += weight[:, :, None] * gaussians.colors[i]
            t_patch *= 1.0 - alpha

    image += transmittance[:, :, None] * background
    return image


def quantize_image(image: np.ndarray) -> np.ndarray:
    """[0,1] float image to 8-bit with round-half-up."""
    return np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)


def render_preview(
    gaussians: GaussianSet,
    camera: PreviewCamera,
    width: int,
    height: int,
    background=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """8-bit preview image."""
    return quantize_image(render_gaussians(gaussians, camera, width, height, background))
