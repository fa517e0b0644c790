import numpy as np
import pytest

from meshsplat import colmap_io, mesh_io, splat_preview
from meshsplat.errors import BehindCamera, EmptyCloud


def make_camera(width=32, height=32, f=30.0, cx=None, cy=None, tz=0.0):
    cx = width / 2.0 if cx is None else cx
    cy = height / 2.0 if cy is None else cy
    return splat_preview.PreviewCamera(
        intrinsics=colmap_io.CameraIntrinsics(
            id=1, model="PINHOLE", width=width, height=height,
            fx=f, fy=f, cx=cx, cy=cy,
        ),
        pose=colmap_io.ImagePose(
            id=1, rotation=[1.0, 0.0, 0.0, 0.0], translation=[0.0, 0.0, tz],
            camera_id=1, name="cam",
        ),
    )


def reference_blend(gaussians, camera, width, height, background):
    """Independent per-pixel evaluation of the documented blending contract.

    Sorts by depth, then per pixel accumulates the explicit product-form sum
    C = sum_i c_i a_i prod_{j<i} (1 - a_j) with the same alpha semantics as
    the renderer (0.99 clamp, 1/255 skip, stop once transmittance < 1e-4).
    """
    background = np.asarray(background, dtype=np.float64)
    projected = []
    for i in range(len(gaussians)):
        cov3d = splat_preview.covariance_3d(gaussians.scales[i], gaussians.rotations[i])
        try:
            mean2d, cov2d, depth = splat_preview.project_gaussian(
                cov3d, gaussians.means[i], camera)
        except BehindCamera:
            continue
        projected.append((depth, i, mean2d, np.linalg.inv(cov2d)))
    projected.sort(key=lambda item: item[0])

    image = np.zeros((height, width, 3), dtype=np.float64)
    for y in range(height):
        for x in range(width):
            transmittance = 1.0
            color = np.zeros(3)
            for _, i, mean2d, inv_cov in projected:
                if transmittance < 1e-4:
                    break
                d = np.array([x, y], dtype=np.float64) - mean2d
                g = np.exp(-0.5 * d @ inv_cov @ d)
                alpha = gaussians.opacities[i] * g
                if alpha < 1.0 / 255.0:
                    continue
                alpha = min(alpha, 0.99)
                color = color + gaussians.colors[i] * alpha * transmittance
                transmittance *= 1.0 - alpha
            image[y, x] = color + transmittance * background
    return image


def random_scene(rng, n):
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    means = rng.uniform(-0.6, 0.6, size=(n, 3))
    means[:, 2] = rng.uniform(2.0, 6.0, size=n)
    return splat_preview.GaussianSet(
        means=means,
        scales=rng.uniform(0.02, 0.4, size=(n, 3)),
        rotations=q,
        opacities=rng.uniform(0.05, 0.95, size=n),
        colors=rng.uniform(0, 1, size=(n, 3)),
    )


# --- init_gaussians ---

def test_init_tetrahedron_unit_scales():
    # regular tetrahedron with unit edge length
    positions = np.array([
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (0.5, np.sqrt(3) / 2, 0.0),
        (0.5, np.sqrt(3) / 6, np.sqrt(6) / 3),
    ], dtype=np.float32)
    cloud = mesh_io.PointCloud(
        positions=positions,
        colors=np.zeros((4, 3), np.uint8),
        normals=np.zeros((4, 3), np.float32),
    )
    gaussians = splat_preview.init_gaussians(cloud)
    assert np.allclose(gaussians.scales, 1.0, atol=1e-6)
    assert np.allclose(gaussians.opacities, 0.1)


def test_init_single_point_clamps():
    cloud = mesh_io.PointCloud(
        positions=np.array([[5, 5, 5]], np.float32),
        colors=np.array([[255, 0, 0]], np.uint8),
        normals=np.zeros((1, 3), np.float32),
    )
    gaussians = splat_preview.init_gaussians(cloud)
    assert np.all(gaussians.scales == 1e-7)
    assert np.allclose(gaussians.colors, [[1, 0, 0]])
    assert np.array_equal(gaussians.rotations, [[1, 0, 0, 0]])


def test_init_empty_cloud():
    empty = mesh_io.PointCloud(
        positions=np.empty((0, 3), np.float32),
        colors=np.empty((0, 3), np.uint8),
        normals=np.empty((0, 3), np.float32),
    )
    with pytest.raises(EmptyCloud):
        splat_preview.init_gaussians(empty)


# --- covariance ---

def test_covariance_identity():
    assert np.allclose(splat_preview.covariance_3d([1, 1, 1], [1, 0, 0, 0]), np.eye(3))


def test_covariance_squares_scales():
    cov = splat_preview.covariance_3d([2, 1, 1], [1, 0, 0, 0])
    assert np.allclose(cov, np.diag([4, 1, 1]))


def test_covariance_rotation_conjugates():
    half = np.sqrt(0.5)
    cov = splat_preview.covariance_3d([2, 1, 1], [half, 0, 0, half])
    assert np.allclose(cov, np.diag([1, 4, 1]), atol=1e-12)


def test_covariance_positive_definite_random():
    rng = np.random.default_rng(2)
    for _ in range(500):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        cov = splat_preview.covariance_3d(rng.uniform(0.01, 5, size=3), q)
        assert np.allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(cov).min() > 0


# --- projection ---

def test_project_on_axis():
    f, d, sigma = 40.0, 5.0, 0.3
    camera = make_camera(f=f)
    mean2d, cov2d, depth = splat_preview.project_gaussian(
        sigma ** 2 * np.eye(3), [0, 0, d], camera)
    assert depth == d
    assert np.allclose(mean2d, [16, 16])
    expected = (f * sigma / d) ** 2 * np.eye(2) + 0.3 * np.eye(2)
    assert np.allclose(cov2d, expected, atol=1e-12)


def test_project_behind_camera():
    camera = make_camera()
    with pytest.raises(BehindCamera):
        splat_preview.project_gaussian(np.eye(3), [0, 0, 0.005], camera)
    with pytest.raises(BehindCamera):
        splat_preview.project_gaussian(np.eye(3), [0, 0, -3], camera)


def test_project_depth_scaling_law():
    f, sigma = 40.0, 0.25
    camera = make_camera(f=f)
    _, cov_near, _ = splat_preview.project_gaussian(
        sigma ** 2 * np.eye(3), [0, 0, 2.0], camera)
    _, cov_far, _ = splat_preview.project_gaussian(
        sigma ** 2 * np.eye(3), [0, 0, 4.0], camera)
    near = cov_near - 0.3 * np.eye(2)
    far = cov_far - 0.3 * np.eye(2)
    assert np.allclose(far, near / 4.0, atol=1e-12)


# --- rendering ---

def test_render_empty_scene_is_background():
    gaussians = splat_preview.GaussianSet(
        means=np.empty((0, 3)), scales=np.empty((0, 3)),
        rotations=np.empty((0, 4)), opacities=np.empty(0), colors=np.empty((0, 3)),
    )
    img = splat_preview.render_preview(gaussians, make_camera(), 32, 32,
                                       background=(0.25, 0.5, 1.0))
    assert np.all(img[:, :, 0] == 64)
    assert np.all(img[:, :, 1] == 128)
    assert np.all(img[:, :, 2] == 255)


def test_render_single_gaussian_center_value():
    gaussians = splat_preview.GaussianSet(
        means=[[0, 0, 5]], scales=[[0.5, 0.5, 0.5]], rotations=[[1, 0, 0, 0]],
        opacities=[0.5], colors=[[1, 1, 1]],
    )
    img = splat_preview.render_preview(gaussians, make_camera(), 32, 32)
    assert img[16, 16].tolist() == [128, 128, 128]


def test_render_two_coincident_gaussians():
    gaussians = splat_preview.GaussianSet(
        means=[[0, 0, 5], [0, 0, 5]],
        scales=[[0.5, 0.5, 0.5]] * 2,
        rotations=[[1, 0, 0, 0]] * 2,
        opacities=[0.5, 0.5],
        colors=[[1, 1, 1], [0, 0, 0]],
    )
    float_img = splat_preview.render_gaussians(gaussians, make_camera(), 32, 32)
    assert float_img[16, 16, 0] == pytest.approx(0.5, abs=1e-12)
    img = splat_preview.quantize_image(float_img)
    assert img[16, 16].tolist() == [128, 128, 128]


def test_render_matches_reference_blend():
    rng = np.random.default_rng(3)
    camera = make_camera()
    for _ in range(10):
        gaussians = random_scene(rng, int(rng.integers(1, 21)))
        fast = splat_preview.render_gaussians(gaussians, camera, 32, 32,
                                              background=(0.1, 0.2, 0.3))
        slow = reference_blend(gaussians, camera, 32, 32, background=(0.1, 0.2, 0.3))
        assert np.max(np.abs(fast - slow)) < 1e-6


def test_render_shuffle_invariance():
    rng = np.random.default_rng(4)
    gaussians = random_scene(rng, 15)
    camera = make_camera()
    base = splat_preview.render_gaussians(gaussians, camera, 32, 32)
    perm = rng.permutation(15)
    shuffled = splat_preview.GaussianSet(
        means=gaussians.means[perm], scales=gaussians.scales[perm],
        rotations=gaussians.rotations[perm], opacities=gaussians.opacities[perm],
        colors=gaussians.colors[perm],
    )
    again = splat_preview.render_gaussians(shuffled, camera, 32, 32)
    assert np.max(np.abs(base - again)) < 1e-12


def test_render_radiance_bounded():
    rng = np.random.default_rng(5)
    gaussians = random_scene(rng, 20)
    img = splat_preview.render_gaussians(gaussians, make_camera(), 32, 32,
                                         background=(1, 1, 1))
    assert img.min() >= 0.0
    assert img.max() <= 1.0 + 1e-9


def test_behind_camera_gaussians_culled():
    gaussians = splat_preview.GaussianSet(
        means=[[0, 0, -5], [0, 0, 5]],
        scales=[[0.5, 0.5, 0.5]] * 2,
        rotations=[[1, 0, 0, 0]] * 2,
        opacities=[0.9, 0.5],
        colors=[[1, 0, 0], [1, 1, 1]],
    )
    img = splat_preview.render_preview(gaussians, make_camera(), 32, 32)
    assert img[16, 16].tolist() == [128, 128, 128]
