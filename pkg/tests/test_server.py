import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tfusplan.config import RunConfig
from tfusplan.phantom import PerturbationSpec, ShellPhantomSpec, make_shell_phantom, perturb_to_sct
from tfusplan.server import create_app
from tfusplan.volume import WorldPoint, write_volume


@pytest.fixture(scope="module")
def case_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cases")
    spec = ShellPhantomSpec(14.0, 10.0, 1.5, 950.0, 700.0, center=WorldPoint(0, 0, 0))
    rct = make_shell_phantom(spec, dims=(96, 96, 96), spacing=(0.5, 0.5, 0.5))
    sct = perturb_to_sct(rct, PerturbationSpec(gaussian_sigma=0.5, noise_sigma=80.0,
                                               hu_bias=100.0, rng_seed=1))
    write_volume(root / "rct.nii", rct)
    write_volume(root / "sct.nii", sct)
    return root


@pytest.fixture(scope="module")
def client(case_files):
    cfg = RunConfig.defaults()
    cfg.array.radius_mm = 17.0
    cfg.sim = type(cfg.sim)(n_cycles=8, rms_window_cycles=3, ramp_cycles=2)
    cfg.validate()
    app = create_app(cfg)
    with TestClient(app) as c:
        r = c.post("/cases", json={"case_id": "demo",
                                   "rct_path": str(case_files / "rct.nii"),
                                   "sct_path": str(case_files / "sct.nii")})
        assert r.status_code == 201, r.text
        yield c


class TestCases:
    def test_list_and_describe(self, client):
        cases = client.get("/cases").json()
        assert [c["case_id"] for c in cases] == ["demo"]
        d = client.get("/cases/demo").json()
        assert d["dims"] == [96, 96, 96]
        assert sorted(d["volumes"]) == ["rct", "sct"]

    def test_duplicate_rejected(self, client, case_files):
        r = client.post("/cases", json={"case_id": "demo", "rct_path": str(case_files / "rct.nii")})
        assert r.status_code == 409
        assert r.json()["code"] == "conflict"

    def test_missing_file_rejected(self, client):
        r = client.post("/cases", json={"case_id": "x", "rct_path": "/nonexistent.nii"})
        assert r.status_code == 400
        assert r.json()["code"] == "io"

    def test_unknown_case_not_found(self, client):
        r = client.post("/cases/ghost/plan", json={"target": [0, 0, 0]})
        assert r.status_code == 404
        assert r.json()["code"] == "not-found"


class TestPlan:
    def test_concentric_plan_990(self, client):
        r = client.post("/cases/demo/plan", json={"target": [0, 0, 0], "tilt_x": 0.0,
                                                  "tilt_y": 0.0, "volume_choice": "rct"})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["nae"] == 990
        assert len(body["active"]) == 990
        assert body["tilt_x"] == 0.0

    def test_identical_requests_identical_payloads(self, client):
        req = {"target": [0.5, -0.5, 0.0], "tilt_x": 2.0, "tilt_y": -1.5, "volume_choice": "sct"}
        a = client.post("/cases/demo/plan", json=req).json()
        b = client.post("/cases/demo/plan", json=req).json()
        assert a == b

    def test_tilt_bound_enforced(self, client):
        r = client.post("/cases/demo/plan", json={"target": [0, 0, 0], "tilt_x": 15.0})
        assert r.status_code == 422
        assert "10" in r.json()["message"]

    def test_target_outside_volume(self, client):
        r = client.post("/cases/demo/plan", json={"target": [500.0, 0, 0]})
        assert r.status_code == 422
        assert r.json()["code"] == "validation"

    def test_elements_listing(self, client):
        r = client.get("/cases/demo/elements",
                       params={"target": "0,0,0", "tilt_x": 0, "tilt_y": 0,
                               "volume_choice": "rct"})
        assert r.status_code == 200
        rows = r.json()
        assert len(rows) == 990
        assert all(len(row["offset"]) == 3 for row in rows[:5])
        assert sum(row["active"] for row in rows) == 990

    def test_optimize_concentric_snaps_to_origin(self, client):
        r = client.post("/cases/demo/optimize", json={"target": [0, 0, 0],
                                                      "volume_choice": "rct",
                                                      "step_deg": 5.0})
        assert r.status_code == 200
        body = r.json()
        assert (body["tilt_x"], body["tilt_y"]) == (0.0, 0.0)
        assert body["nae"] == 990


class TestSlices:
    def test_png_slice_annulus(self, client):
        r = client.get("/cases/demo/slice", params={"volume": "rct", "axis": "z", "index": 48,
                                                    "window": 1000, "level": 400})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.headers["X-Window-Width"] == "1000.0"
        from PIL import Image

        img = np.asarray(Image.open(io.BytesIO(r.content)))
        assert img.shape == (96, 96)
        # bright shell ring, dark center (0 HU maps low inside this window)
        assert img[48, 48] < 50
        ring = int(round(12.0 / 0.5))
        assert img[48, 48 + ring] > 200

    def test_raw_slice(self, client):
        r = client.get("/cases/demo/slice.raw", params={"volume": "rct", "axis": "x", "index": 10})
        assert r.status_code == 200
        plane = np.frombuffer(r.content, dtype="<f4")
        assert plane.size == 96 * 96

    def test_rms_before_simulation_unavailable(self, client):
        r = client.get("/cases/demo/slice", params={"volume": "rms", "axis": "z", "index": 10})
        assert r.status_code == 409
        assert r.json()["code"] == "not-available"

    def test_index_out_of_range(self, client):
        r = client.get("/cases/demo/slice", params={"volume": "rct", "axis": "z", "index": 96})
        assert r.status_code == 422


@pytest.mark.slow
class TestJobs:
    def poll(self, client, job_id, timeout=120.0):
        t0 = time.time()
        states = []
        while time.time() - t0 < timeout:
            body = client.get(f"/jobs/{job_id}").json()
            if not states or states[-1] != body["state"]:
                states.append(body["state"])
            if body["state"] in ("done", "failed"):
                return body, states
            time.sleep(0.2)
        raise TimeoutError(states)

    def test_submit_poll_lifecycle(self, client):
        r = client.post("/cases/demo/simulate", json={"target": [0, 0, 0],
                                                      "volume_choice": "rct"})
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        body, states = self.poll(client, job_id)
        assert body["state"] == "done", body
        assert body["result"]["max_rms_pa"] > 0
        assert states == [s for s in ("queued", "running", "done") if s in states]
        # rms slices become available once done
        r = client.get("/cases/demo/slice", params={"volume": "rms", "axis": "z", "index": 48})
        assert r.status_code == 200

    def test_second_submit_queues_behind_first(self, client):
        a = client.post("/cases/demo/simulate", json={"target": [0, 0, 0],
                                                      "volume_choice": "rct"}).json()["job_id"]
        b = client.post("/cases/demo/simulate", json={"target": [0, 0, 0],
                                                      "volume_choice": "sct"}).json()["job_id"]
        body_a, _ = self.poll(client, a)
        body_b, _ = self.poll(client, b)
        assert body_a["state"] == "done" and body_b["state"] == "done"

    def test_unknown_job_not_found(self, client):
        r = client.get("/jobs/job-999999")
        assert r.status_code == 404
