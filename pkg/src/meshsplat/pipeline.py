"""Pipeline orchestration shared by the CLI and the alignment service.

parse -> validate -> grade -> sample -> cluster/assign colors -> transform ->
merge -> write. The CLI runs the whole chain; the service runs the sampling
half eagerly and the finalize half on /merge, through these same functions so
both paths produce byte-identical artifacts.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import color_init, colmap_io, mesh_io, registration, sampler
from .errors import ConfigError

_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass
class PipelineConfig:
    mesh_path: Path
    colmap_dir: Path | None = None
    images_dir: Path | None = None
    num_grades: int | None = None        # None = automatic selection
    budget: int = sampler.DEFAULT_POINT_BUDGET
    k: int = color_init.DEFAULT_K
    seed: int = color_init.DEFAULT_SEED
    transform_path: Path | None = None   # None = identity
    out_ply: Path | None = None
    out_points3d: Path | None = None
    target_height: int = color_init.DEFAULT_TARGET_HEIGHT
    single_color: bool = False
    pixel_subsample: int | None = None   # cluster at most this many pixels

    def __post_init__(self):
        for name in ("mesh_path", "colmap_dir", "images_dir", "transform_path",
                     "out_ply", "out_points3d"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value))

    def validate(self, require_colmap: bool = True, require_images: bool = True):
        """Check every referenced input before doing any work."""
        if not self.mesh_path.is_file():
            raise ConfigError(f"mesh file not found: {self.mesh_path}")
        if require_colmap:
            if self.colmap_dir is None:
                raise ConfigError("a COLMAP model directory is required")
            if not self.colmap_dir.is_dir():
                raise ConfigError(f"COLMAP model directory not found: {self.colmap_dir}")
        if require_images:
            if self.images_dir is None:
                raise ConfigError("an images directory is required")
            if not self.images_dir.is_dir():
                raise ConfigError(f"images directory not found: {self.images_dir}")
            if not list_image_files(self.images_dir):
                raise ConfigError(f"no JPEG/PNG images in {self.images_dir}")
        if self.transform_path is not None and not self.transform_path.is_file():
            raise ConfigError(f"transform file not found: {self.transform_path}")
        if self.num_grades is not None:
            if not 1 <= self.num_grades <= sampler.MAX_DEPTH + 1:
                raise ConfigError(f"num_grades out of range: {self.num_grades}")
            if self.budget < 4 ** (self.num_grades - 1):
                raise ConfigError("budget below the largest single-triangle count")


@dataclass(eq=False)
class SamplingResult:
    cloud: mesh_io.PointCloud          # colored sampled cloud, mesh/model frame
    report: mesh_io.ValidationReport
    num_grades: int
    histogram: np.ndarray              # per-grade triangle counts
    palette: color_init.ColorPalette
    timings: dict = field(default_factory=dict)


def list_image_files(images_dir: Path) -> list:
    return sorted(
        p for p in Path(images_dir).iterdir()
        if p.suffix.lower() in _IMAGE_SUFFIXES
    )


def load_transform_or_identity(path: Path | None) -> registration.SimilarityTransform:
    if path is None:
        return registration.SimilarityTransform.identity()
    return registration.load_transform(path)


def sample_and_color(config: PipelineConfig) -> SamplingResult:
    """Mesh -> graded sample -> palette colors, in the mesh frame."""
    timings = {}
    t0 = time.perf_counter()
    mesh = mesh_io.parse_ply_mesh(config.mesh_path.read_bytes())
    report = mesh_io.validate_mesh(mesh)
    timings["parse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    keep, areas = sampler.usable_faces(mesh)
    if config.num_grades is None:
        num_grades, _ = sampler.choose_num_grades(areas, config.budget)
    else:
        num_grades = config.num_grades
    assignment = sampler.grade_triangles(areas, num_grades)
    histogram = np.bincount(assignment.grades, minlength=num_grades)
    table = sampler.barycentric_table(num_grades - 1)
    sampled = sampler.sample_mesh(mesh, num_grades, table)
    timings["sample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    images = color_init.load_images(list_image_files(config.images_dir))
    pixels = color_init.collect_pixels(images, config.target_height)
    if config.pixel_subsample is not None:
        pixels = color_init.subsample_pixels(pixels, config.pixel_subsample, config.seed)
    palette = color_init.kmeans_colors(pixels, k=config.k, seed=config.seed)
    colors = color_init.assign_initial_colors(
        len(sampled), palette, seed=config.seed, single_color=config.single_color
    )
    timings["colors"] = time.perf_counter() - t0

    cloud = mesh_io.PointCloud(
        positions=sampled.positions.astype(np.float32),
        colors=colors,
        normals=sampled.normals.astype(np.float32),
    )
    return SamplingResult(
        cloud=cloud, report=report, num_grades=num_grades,
        histogram=histogram, palette=palette, timings=timings,
    )


def sfm_cloud_from_model(model: colmap_io.SparseModel) -> mesh_io.PointCloud:
    """COLMAP points in canonical id order; COLMAP colors, zero normals."""
    ids = sorted(model.points)
    n = len(ids)
    positions = np.zeros((n, 3), dtype=np.float32)
    colors = np.zeros((n, 3), dtype=np.uint8)
    for row, pid in enumerate(ids):
        point = model.points[pid]
        positions[row] = point.position
        colors[row] = point.color
    return mesh_io.PointCloud(
        positions=positions, colors=colors, normals=np.zeros((n, 3), dtype=np.float32)
    )


def finalize_merge(
    sampled_cloud: mesh_io.PointCloud,
    sfm_cloud: mesh_io.PointCloud,
    transform: registration.SimilarityTransform,
    out_ply: Path | None,
    out_points3d: Path | None,
) -> dict:
    """Apply the registration, merge, and write the requested artifacts."""
    aligned = registration.apply_similarity(sampled_cloud, transform)
    merged = registration.merge_clouds(aligned, sfm_cloud)
    artifacts = {}
    if out_ply is not None:
        out_ply = Path(out_ply)
        out_ply.parent.mkdir(parents=True, exist_ok=True)
        out_ply.write_bytes(mesh_io.write_ply_points(merged))
        artifacts["ply"] = str(out_ply)
    if out_points3d is not None:
        out_points3d = Path(out_points3d)
        out_points3d.parent.mkdir(parents=True, exist_ok=True)
        n = len(merged)
        if out_points3d.suffix.lower() == ".txt":
            points = [
                colmap_io.SparsePoint(
                    id=i + 1, position=merged.positions[i],
                    color=merged.colors[i], error=0.0, track=[],
                )
                for i in range(n)
            ]
            blob = colmap_io.write_points3d(points, format="text")
        else:
            blob = colmap_io.write_points3d_trackless(
                np.arange(1, n + 1), merged.positions, merged.colors, np.zeros(n))
        out_points3d.write_bytes(blob)
        artifacts["points3d"] = str(out_points3d)
    return {"artifacts": artifacts, "merged": merged}


def run_pipeline(config: PipelineConfig, log=print) -> dict:
    """Full CLI pipeline; returns {'artifacts': {...}, 'merged': PointCloud}."""
    config.validate()
    transform = load_transform_or_identity(config.transform_path)

    result = sample_and_color(config)
    if result.report.warnings:
        for line in result.report.warnings:
            log(f"warning: {line}")
    log(f"mesh: {result.report.triangle_count} triangles "
        f"({len(result.report.degenerate_faces)} degenerate)")
    log(f"grades: N+1={result.num_grades}")
    log("grades histogram: " + " ".join(
        f"{g}:{int(c)}" for g, c in enumerate(result.histogram)))
    log(f"sampled points: {len(result.cloud)}")
    log("palette centers: " + "; ".join(
        f"({r:.1f},{g:.1f},{b:.1f})x{int(s)}"
        for (r, g, b), s in zip(result.palette.centers, result.palette.sizes)))

    t0 = time.perf_counter()
    model = colmap_io.load_sparse_dir(config.colmap_dir)
    sfm = sfm_cloud_from_model(model)
    log(f"sfm points: {len(sfm)}")

    out = finalize_merge(result.cloud, sfm, transform, config.out_ply, config.out_points3d)
    result.timings["merge"] = time.perf_counter() - t0
    log(f"merged points: {len(out['merged'])}")
    for kind, path in out["artifacts"].items():
        log(f"wrote {kind}: {path}")
    log("timings: " + " ".join(
        f"{name}={dt * 1000:.1f}ms" for name, dt in result.timings.items()))
    return out
