import struct

import numpy as np
import pytest
from fastapi.testclient import TestClient

from meshsplat import cli, pipeline, service

IDENTITY = {"scale": 1.0, "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.0, 0.0, 0.0]}


@pytest.fixture
def client(fixture_workspace):
    ws = fixture_workspace
    config = pipeline.PipelineConfig(
        mesh_path=ws["mesh"],
        colmap_dir=ws["sparse"],
        images_dir=ws["images"],
        num_grades=6,
        out_ply=ws["root"] / "service_out" / "merged.ply",
        out_points3d=ws["root"] / "service_out" / "points3D.bin",
    )
    app = service.create_app(config)
    return TestClient(app, raise_server_exceptions=False)


def parse_wire(blob: bytes):
    (count,) = struct.unpack_from("<I", blob, 0)
    record = np.dtype([("pos", "<f4", 3), ("rgb", "u1", 3)])
    rows = np.frombuffer(blob, dtype=record, count=count, offset=4)
    assert len(blob) == 4 + count * 15
    return rows


def test_get_session_initial_state(client):
    doc = client.get("/session").json()
    assert doc["transform"] == IDENTITY
    assert doc["clouds"]["sampled"]["points"] == 4 * 4 ** 5
    assert doc["clouds"]["sfm"]["points"] == 40
    assert doc["correspondences"] == []


def test_cloud_binary_buffers(client):
    doc = client.get("/session").json()
    for name in ("sampled", "sfm"):
        resp = client.get(doc["clouds"][name]["url"])
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "application/octet-stream"
        rows = parse_wire(resp.content)
        assert len(rows) == doc["clouds"][name]["points"]


def test_unknown_cloud_404(client):
    assert client.get("/session/cloud/nope").status_code == 404


def test_put_transform_read_your_write(client):
    doc = {"scale": 2.0, "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.5, 0.0, -1.0]}
    resp = client.put("/session/transform", json=doc)
    assert resp.status_code == 200
    assert resp.json()["transform"] == doc
    assert client.get("/session").json()["transform"] == doc


def test_put_invalid_transform_rejected(client):
    bad = {"scale": 0.0, "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.0, 0.0, 0.0]}
    assert client.put("/session/transform", json=bad).status_code == 400
    bad = {"scale": 1.0, "rotation": [1.0, 1.0, 0.0, 0.0], "translation": [0.0, 0.0, 0.0]}
    assert client.put("/session/transform", json=bad).status_code == 400
    assert client.put("/session/transform", json={"scale": 1.0}).status_code in (400, 422)
    # state unchanged
    assert client.get("/session").json()["transform"] == IDENTITY


def test_estimate_needs_three_pairs(client):
    for point in ([0, 0, 0], [1, 0, 0]):
        resp = client.post("/session/correspondences",
                           json={"action": "add", "source": point, "target": point})
        assert resp.status_code == 200
    assert client.post("/session/estimate").status_code == 409


def test_estimate_identity_from_exact_pairs(client):
    pairs = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    for point in pairs:
        client.post("/session/correspondences",
                    json={"action": "add", "source": point, "target": point})
    resp = client.post("/session/estimate")
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["residual_rms"] < 1e-9
    assert doc["transform"]["scale"] == pytest.approx(1.0, abs=1e-9)
    # proposal is not auto-applied
    assert client.get("/session").json()["transform"] == IDENTITY


def test_correspondence_remove_and_clear(client):
    for i in range(3):
        client.post("/session/correspondences",
                    json={"action": "add", "source": [i, 0, 0], "target": [i, 0, 0]})
    doc = client.post("/session/correspondences",
                      json={"action": "remove", "index": 1}).json()
    assert len(doc["correspondences"]) == 2
    doc = client.post("/session/correspondences", json={"action": "clear"}).json()
    assert doc["correspondences"] == []
    resp = client.post("/session/correspondences",
                       json={"action": "remove", "index": 5})
    assert resp.status_code == 400


def test_merge_writes_artifacts(client, fixture_workspace):
    client.put("/session/transform", json=IDENTITY)
    resp = client.post("/session/merge")
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["points"] == 40 + 4 * 4 ** 5
    out_ply = fixture_workspace["root"] / "service_out" / "merged.ply"
    assert out_ply.is_file()
    assert (fixture_workspace["root"] / "service_out" / "points3D.bin").is_file()


def test_service_merge_equals_cli_merge(client, fixture_workspace, capsys):
    ws = fixture_workspace
    cli_out = ws["root"] / "cli_out" / "merged.ply"
    code = cli.main([
        "pipeline",
        "--mesh", str(ws["mesh"]),
        "--colmap", str(ws["sparse"]),
        "--images", str(ws["images"]),
        "--grades", "6",
        "--transform", str(ws["transform"]),
        "--out-ply", str(cli_out),
    ])
    assert code == 0
    client.put("/session/transform", json=IDENTITY)
    client.post("/session/merge")
    service_out = ws["root"] / "service_out" / "merged.ply"
    assert service_out.read_bytes() == cli_out.read_bytes()


def test_preview_endpoint_returns_png(client):
    resp = client.get("/session/preview", params={"image_id": 1})
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert client.get("/session/preview", params={"image_id": 99}).status_code == 404


def test_internal_errors_do_not_leak(client):
    # malformed JSON body -> structured 4xx, not a traceback
    resp = client.put("/session/transform", content=b"{not json",
                      headers={"content-type": "application/json"})
    assert resp.status_code in (400, 422)
    assert b"Traceback" not in resp.content
