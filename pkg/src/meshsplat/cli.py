"""Command-line interface.

Subcommands: sample, colors, merge, pipeline, preview, metrics, serve.
Errors exit nonzero with a single machine-parsable line on stderr:
"error: <Type>: <message>" (exit 2 for configuration problems, 1 otherwise).
"""

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import (
    color_init,
    colmap_io,
    mesh_io,
    metrics,
    pipeline,
    sampler,
    splat_preview,
)
from .errors import ConfigError, MeshSplatError


def _add_pipeline_flags(p: argparse.ArgumentParser, require_outputs: bool):
    p.add_argument("--mesh", required=True, help="raw building mesh (PLY)")
    p.add_argument("--colmap", required=True, help="COLMAP sparse model directory")
    p.add_argument("--images", required=True, help="directory of dataset photos")
    p.add_argument("--grades", default="auto",
                   help="number of grades N+1 (e.g. 9) or 'auto' (default)")
    p.add_argument("--budget", type=int, default=sampler.DEFAULT_POINT_BUDGET,
                   help="point budget for automatic grade selection")
    p.add_argument("--k", type=int, default=color_init.DEFAULT_K,
                   help="number of palette colors")
    p.add_argument("--seed", type=int, default=color_init.DEFAULT_SEED)
    p.add_argument("--transform", default=None,
                   help="similarity transform file (.json or 4x4 matrix text); identity if omitted")
    p.add_argument("--single-color", action="store_true",
                   help="draw one palette color for the whole cloud instead of per point")
    p.add_argument("--height", type=int, default=color_init.DEFAULT_TARGET_HEIGHT,
                   help="downscale height for color picking")
    p.add_argument("--subsample", type=int, default=None,
                   help="cluster at most this many pixels (speed knob)")
    p.add_argument("--out-ply", required=require_outputs, default=None,
                   help="merged point cloud PLY output")
    p.add_argument("--out-points3d", default=None,
                   help="merged cloud as COLMAP points3D (.bin or .txt)")


def _config_from_args(args) -> pipeline.PipelineConfig:
    num_grades = None if args.grades == "auto" else int(args.grades)
    return pipeline.PipelineConfig(
        mesh_path=Path(args.mesh),
        colmap_dir=Path(args.colmap),
        images_dir=Path(args.images),
        num_grades=num_grades,
        budget=args.budget,
        k=args.k,
        seed=args.seed,
        transform_path=Path(args.transform) if args.transform else None,
        out_ply=Path(args.out_ply) if args.out_ply else None,
        out_points3d=Path(args.out_points3d) if args.out_points3d else None,
        target_height=args.height,
        single_color=args.single_color,
        pixel_subsample=args.subsample,
    )


def _cmd_pipeline(args) -> int:
    pipeline.run_pipeline(_config_from_args(args))
    return 0


def _cmd_sample(args) -> int:
    mesh = mesh_io.parse_ply_mesh(Path(args.mesh).read_bytes())
    report = mesh_io.validate_mesh(mesh)
    for line in report.warnings:
        print(f"warning: {line}")
    keep, areas = sampler.usable_faces(mesh)
    if args.grades == "auto":
        num_grades, _ = sampler.choose_num_grades(areas, args.budget)
    else:
        num_grades = int(args.grades)
    t0 = time.perf_counter()
    table = sampler.barycentric_table(num_grades - 1)
    cloud = sampler.sample_mesh(mesh, num_grades, table)
    dt = time.perf_counter() - t0
    assignment = sampler.grade_triangles(areas, num_grades)
    histogram = np.bincount(assignment.grades, minlength=num_grades)
    print(f"mesh: {report.triangle_count} triangles")
    print(f"grades: N+1={num_grades}")
    print("grades histogram: " + " ".join(f"{g}:{int(c)}" for g, c in enumerate(histogram)))
    print(f"sampled points: {len(cloud)} in {dt * 1000:.1f}ms")
    colors = np.full((len(cloud), 3), 128, dtype=np.uint8)
    out = mesh_io.PointCloud(
        positions=cloud.positions.astype(np.float32),
        colors=colors,
        normals=cloud.normals.astype(np.float32),
    )
    Path(args.out).write_bytes(mesh_io.write_ply_points(out))
    print(f"wrote ply: {args.out}")
    return 0


def _cmd_colors(args) -> int:
    paths = pipeline.list_image_files(Path(args.images))
    if not paths:
        raise ConfigError(f"no JPEG/PNG images in {args.images}")
    images = color_init.load_images(paths)
    pixels = color_init.collect_pixels(images, args.height)
    palette = color_init.kmeans_colors(pixels, k=args.k, seed=args.seed)
    print(f"pixels: {len(pixels)} from {pixels.source_image_count} images")
    for center, size in zip(palette.centers, palette.sizes):
        print(f"center: {center[0]:.2f},{center[1]:.2f},{center[2]:.2f} size: {int(size)}")
    return 0


def _cmd_merge(args) -> int:
    sampled = mesh_io.read_ply_points(Path(args.sampled).read_bytes())
    model = colmap_io.load_sparse_dir(Path(args.colmap))
    sfm = pipeline.sfm_cloud_from_model(model)
    transform = pipeline.load_transform_or_identity(
        Path(args.transform) if args.transform else None)
    out = pipeline.finalize_merge(
        sampled, sfm, transform,
        Path(args.out_ply) if args.out_ply else None,
        Path(args.out_points3d) if args.out_points3d else None,
    )
    print(f"merged points: {len(out['merged'])}")
    for kind, path in out["artifacts"].items():
        print(f"wrote {kind}: {path}")
    return 0


def _cmd_preview(args) -> int:
    from PIL import Image

    cloud = mesh_io.read_ply_points(Path(args.ply).read_bytes())
    model = colmap_io.load_sparse_dir(Path(args.colmap))
    if args.pose is not None:
        values = [float(v) for v in args.pose.split(",")]
        if len(values) != 7:
            raise ConfigError("--pose wants qw,qx,qy,qz,tx,ty,tz")
        camera_id = args.camera_id if args.camera_id is not None else min(model.cameras)
        if camera_id not in model.cameras:
            raise ConfigError(f"no camera with id {camera_id} in the model")
        intr = model.cameras[camera_id]
        rotation = np.asarray(values[:4])
        rotation = rotation / np.linalg.norm(rotation)
        pose = colmap_io.ImagePose(
            id=0, rotation=rotation, translation=values[4:],
            camera_id=camera_id, name="explicit",
        )
    else:
        if args.image_id is None:
            raise ConfigError("give --image-id or --pose")
        if args.image_id not in model.images:
            raise ConfigError(f"no image with id {args.image_id} in the model")
        pose = model.images[args.image_id]
        intr = model.cameras[pose.camera_id]
    camera = splat_preview.PreviewCamera(intrinsics=intr, pose=pose)
    gaussians = splat_preview.init_gaussians(cloud)
    background = tuple(int(v) / 255.0 for v in args.background.split(","))
    image = splat_preview.render_preview(
        gaussians, camera, intr.width, intr.height, background)
    Image.fromarray(image).save(args.out)
    print(f"wrote preview: {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    from PIL import Image

    a_path, b_path = Path(args.image_a), Path(args.image_b)
    if a_path.is_dir() != b_path.is_dir():
        raise ConfigError("give two image files or two directories")
    if a_path.is_dir():
        names = sorted(p.name for p in a_path.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        pairs = [(name, a_path / name, b_path / name) for name in names
                 if (b_path / name).is_file()]
        if not pairs:
            raise ConfigError("no matching image names across the two directories")
    else:
        pairs = [(a_path.name, a_path, b_path)]
    bbox = metrics.BoundingBox.parse(args.bbox) if args.bbox else None
    print("name,psnr_db,ssim")
    for name, pa, pb in pairs:
        img_a = np.asarray(Image.open(pa).convert("RGB"))
        img_b = np.asarray(Image.open(pb).convert("RGB"))
        p = metrics.psnr(img_a, img_b, bbox)
        s = metrics.ssim(img_a, img_b, bbox, luma=not args.per_channel)
        p_text = "inf" if p == float("inf") else f"{p:.4f}"
        print(f"{name},{p_text},{s:.6f}")
    return 0


def _cmd_serve(args) -> int:
    from . import service

    config = _config_from_args(args)
    host = os.environ.get("MESHSPLAT_HOST", "127.0.0.1")
    port = int(os.environ.get("MESHSPLAT_PORT", "8731"))
    service.serve_api(config, host=host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshsplat",
        description="Raw building meshes to Gaussian-Splatting-ready point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full sample/color/merge pipeline")
    _add_pipeline_flags(p, require_outputs=False)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sample", help="sample a mesh into a point cloud PLY")
    p.add_argument("--mesh", required=True)
    p.add_argument("--grades", default="auto")
    p.add_argument("--budget", type=int, default=sampler.DEFAULT_POINT_BUDGET)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("colors", help="extract the dataset color palette")
    p.add_argument("--images", required=True)
    p.add_argument("--k", type=int, default=color_init.DEFAULT_K)
    p.add_argument("--seed", type=int, default=color_init.DEFAULT_SEED)
    p.add_argument("--height", type=int, default=color_init.DEFAULT_TARGET_HEIGHT)
    p.set_defaults(func=_cmd_colors)

    p = sub.add_parser("merge", help="apply a transform and merge with a COLMAP model")
    p.add_argument("--sampled", required=True, help="sampled point cloud PLY")
    p.add_argument("--colmap", required=True)
    p.add_argument("--transform", default=None)
    p.add_argument("--out-ply", default=None)
    p.add_argument("--out-points3d", default=None)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("preview", help="render a point cloud from a COLMAP camera")
    p.add_argument("--ply", required=True)
    p.add_argument("--colmap", required=True)
    p.add_argument("--image-id", type=int, default=None,
                   help="render from this COLMAP image's camera")
    p.add_argument("--pose", default=None,
                   help="explicit world-to-camera pose qw,qx,qy,qz,tx,ty,tz")
    p.add_argument("--camera-id", type=int, default=None,
                   help="intrinsics to use with --pose (default: lowest id)")
    p.add_argument("--background", default="0,0,0", help="8-bit r,g,b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("metrics", help="PSNR/SSIM between image pairs (CSV on stdout)")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--bbox", default=None, help="crop as x,y,w,h")
    p.add_argument("--per-channel", action="store_true",
                   help="average per-channel SSIM instead of luma SSIM")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("serve", help="start the alignment service (loopback)")
    _add_pipeline_flags(p, require_outputs=False)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: ConfigError: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: FileNotFoundError: {exc}", file=sys.stderr)
        return 2
    except MeshSplatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
