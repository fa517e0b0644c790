import numpy as np

from meshsplat import cli, mesh_io


def run_cli(args):
    return cli.main([str(a) for a in args])


def test_pipeline_end_to_end(fixture_workspace, capsys):
    ws = fixture_workspace
    out_ply = ws["root"] / "out" / "merged.ply"
    out_pts = ws["root"] / "out" / "points3D.bin"
    code = run_cli([
        "pipeline",
        "--mesh", ws["mesh"], "--colmap", ws["sparse"], "--images", ws["images"],
        "--grades", "6", "--transform", ws["transform"],
        "--out-ply", out_ply, "--out-points3d", out_pts,
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "grades histogram" in captured.out
    assert out_ply.is_file() and out_pts.is_file()
    merged = mesh_io.read_ply_points(out_ply.read_bytes())
    assert len(merged) == 40 + 4 * 4 ** 5


def test_pipeline_missing_transform_is_config_error(fixture_workspace, capsys):
    ws = fixture_workspace
    out_ply = ws["root"] / "out" / "merged.ply"
    code = run_cli([
        "pipeline",
        "--mesh", ws["mesh"], "--colmap", ws["sparse"], "--images", ws["images"],
        "--transform", ws["root"] / "nope.json",
        "--out-ply", out_ply,
    ])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("error: ConfigError:")
    assert "\n" not in captured.err.strip()
    assert not out_ply.exists()


def test_pipeline_auto_grades_respects_budget(fixture_workspace, capsys):
    ws = fixture_workspace
    out_ply = ws["root"] / "out" / "auto.ply"
    code = run_cli([
        "pipeline",
        "--mesh", ws["mesh"], "--colmap", ws["sparse"], "--images", ws["images"],
        "--grades", "auto", "--budget", "300000",
        "--out-ply", out_ply,
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "N+1=9" in captured.out  # 4 * 4^8 = 262144 fits in 300k
    merged = mesh_io.read_ply_points(out_ply.read_bytes())
    assert len(merged) - 40 == 4 * 4 ** 8
    assert len(merged) - 40 <= 300_000


def test_sample_subcommand(fixture_workspace, tmp_path, capsys):
    out = tmp_path / "sampled.ply"
    code = run_cli(["sample", "--mesh", fixture_workspace["mesh"],
                    "--grades", "4", "--out", out])
    assert code == 0
    cloud = mesh_io.read_ply_points(out.read_bytes())
    assert len(cloud) == 4 * 4 ** 3
    assert "sampled points" in capsys.readouterr().out


def test_colors_subcommand(fixture_workspace, capsys):
    code = run_cli(["colors", "--images", fixture_workspace["images"], "--k", "3"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("center:") == 3


def test_merge_subcommand(fixture_workspace, tmp_path, capsys):
    ws = fixture_workspace
    sampled = tmp_path / "sampled.ply"
    assert run_cli(["sample", "--mesh", ws["mesh"], "--grades", "4",
                    "--out", sampled]) == 0
    out_ply = tmp_path / "merged.ply"
    code = run_cli(["merge", "--sampled", sampled, "--colmap", ws["sparse"],
                    "--transform", ws["transform"], "--out-ply", out_ply])
    assert code == 0
    merged = mesh_io.read_ply_points(out_ply.read_bytes())
    assert len(merged) == 40 + 4 * 4 ** 3


def test_preview_subcommand(fixture_workspace, tmp_path, capsys):
    ws = fixture_workspace
    sampled = tmp_path / "sampled.ply"
    run_cli(["sample", "--mesh", ws["mesh"], "--grades", "3", "--out", sampled])
    out_png = tmp_path / "view.png"
    code = run_cli(["preview", "--ply", sampled, "--colmap", ws["sparse"],
                    "--image-id", "1", "--out", out_png])
    assert code == 0
    assert out_png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_preview_explicit_pose(fixture_workspace, tmp_path, capsys):
    ws = fixture_workspace
    sampled = tmp_path / "sampled.ply"
    run_cli(["sample", "--mesh", ws["mesh"], "--grades", "3", "--out", sampled])
    out_png = tmp_path / "posed.png"
    code = run_cli(["preview", "--ply", sampled, "--colmap", ws["sparse"],
                    "--pose", "1,0,0,0,0,0,4", "--out", out_png])
    assert code == 0
    assert out_png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    # identical to using image 1, whose pose is the same
    via_id = tmp_path / "view.png"
    run_cli(["preview", "--ply", sampled, "--colmap", ws["sparse"],
             "--image-id", "1", "--out", via_id])
    assert out_png.read_bytes() == via_id.read_bytes()


def test_metrics_subcommand(tmp_path, capsys):
    from PIL import Image

    rng = np.random.default_rng(1)
    a = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
    b = np.clip(a.astype(int) + rng.integers(-20, 20, size=a.shape), 0, 255).astype(np.uint8)
    pa, pb = tmp_path / "a.png", tmp_path / "b.png"
    Image.fromarray(a).save(pa)
    Image.fromarray(b).save(pb)
    code = run_cli(["metrics", pa, pb])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "name,psnr_db,ssim"
    name, p, s = lines[1].split(",")
    assert name == "a.png"
    assert 10 < float(p) < 50
    assert -1 <= float(s) <= 1

    code = run_cli(["metrics", pa, pa])
    out = capsys.readouterr().out
    assert "inf" in out.splitlines()[1]


def test_metrics_with_bbox(tmp_path, capsys):
    from PIL import Image

    rng = np.random.default_rng(2)
    a = rng.integers(0, 256, size=(64, 64, 3)).astype(np.uint8)
    b = a.copy()
    b[:16, :16] = 0
    pa, pb = tmp_path / "a.png", tmp_path / "b.png"
    Image.fromarray(a).save(pa)
    Image.fromarray(b).save(pb)
    code = run_cli(["metrics", pa, pb, "--bbox", "32,32,16,16"])
    out = capsys.readouterr().out
    assert code == 0
    assert "inf" in out.splitlines()[1]


def test_bad_mesh_path_exits_nonzero(fixture_workspace, capsys):
    ws = fixture_workspace
    code = run_cli([
        "pipeline", "--mesh", ws["root"] / "missing.ply",
        "--colmap", ws["sparse"], "--images", ws["images"],
        "--out-ply", ws["root"] / "x.ply",
    ])
    assert code == 2
    assert "error: ConfigError" in capsys.readouterr().err
