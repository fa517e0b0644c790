"""meshsplat: raw building meshes to Gaussian-Splatting-ready point clouds.

Samples a dense point cloud on a coarse mesh (area-graded barycentric
sampling), colors it from the photo dataset's dominant colors, registers it
against a COLMAP sparse reconstruction, and writes the merged cloud in
formats splatting trainers consume. Includes a reference CPU splat renderer
and PSNR/SSIM metrics for verification.
"""

__version__ = "0.1.0"

from .color_init import assign_initial_colors, collect_pixels, kmeans_colors
from .colmap_io import SparseModel, read_sparse_model, write_points3d
from .mesh_io import (
    PointCloud,
    TriangleMesh,
    parse_ply_mesh,
    read_ply_points,
    validate_mesh,
    write_ply_points,
)
from .metrics import BoundingBox, psnr, ssim
from .registration import (
    SimilarityTransform,
    apply_similarity,
    estimate_similarity,
    merge_clouds,
)
from .sampler import barycentric_table, grade_triangles, sample_mesh
from .splat_preview import (
    GaussianSet,
    PreviewCamera,
    covariance_3d,
    init_gaussians,
    project_gaussian,
    render_gaussians,
    render_preview,
)
