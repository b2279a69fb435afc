import base64
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from edgecl.data import SynthSpec, generate_synthetic
from edgecl.service import create_app


@pytest.fixture
def client():
    app = create_app(default_dim=16, default_classes=4, default_capacity=40, default_quota=10)
    with TestClient(app) as c:
        yield c


def make_session(client, mode="cl", dim=16, classes=4, **extra):
    body = {"mode": mode, "dim": dim, "classes": classes, **extra}
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


def stage(client, sid, cls, vec):
    return client.post(
        f"/sessions/{sid}/samples", json={"class": cls, "features": [float(v) for v in vec]}
    )


class TestCreate:
    def test_create_cl_session(self, client):
        resp = client.post("/sessions", json={"mode": "cl", "dim": 64, "classes": 4})
        assert resp.status_code == 201
        body = resp.json()
        assert len(body["id"]) == 32  # 128-bit hex
        assert body["config"]["dim"] == 64
        assert body["config"]["buffer_config"]["capacity"] == 40
        assert body["config"]["buffer_config"]["quota"] == 10

    def test_defaults_mirror_server_config(self, client):
        resp = client.post("/sessions", json={"mode": "cl"})
        assert resp.status_code == 201
        cfg = resp.json()["config"]
        assert cfg["dim"] == 16 and cfg["classes"] == 4

    def test_tl_with_buffer_config_rejected(self, client):
        resp = client.post(
            "/sessions", json={"mode": "tl", "buffer_config": {"capacity": 10}}
        )
        assert resp.status_code == 400

    def test_distinct_ids(self, client):
        a = make_session(client)
        b = make_session(client)
        assert a != b

    def test_class_cap_enforced(self, client):
        resp = client.post("/sessions", json={"mode": "tl", "classes": 99})
        assert resp.status_code == 400

    def test_unknown_fields_rejected_with_400(self, client):
        resp = client.post("/sessions", json={"mode": "tl", "bogus": 1})
        assert resp.status_code == 400

    def test_invalid_mode_rejected(self, client):
        resp = client.post("/sessions", json={"mode": "sideways"})
        assert resp.status_code == 400


class TestSamples:
    def test_staged_counts_accumulate(self, client):
        sid = make_session(client)
        rng = np.random.default_rng(0)
        for i in range(50):
            resp = stage(client, sid, 0, rng.standard_normal(16))
            assert resp.status_code == 200
        assert resp.json()["staged_counts"]["0"] == 50

    def test_wrong_dimension_rejected(self, client):
        sid = make_session(client)
        resp = stage(client, sid, 0, np.zeros(7))
        assert resp.status_code == 400

    def test_unknown_session_404(self, client):
        resp = client.post("/sessions/deadbeef/samples", json={"class": 0, "features": [0.0] * 16})
        assert resp.status_code == 404

    def test_class_out_of_range_rejected(self, client):
        sid = make_session(client)
        resp = stage(client, sid, 9, np.zeros(16))
        assert resp.status_code == 400

    def test_non_finite_features_rejected(self, client):
        # strict-JSON clients cannot even encode NaN; guard against the
        # python-style literal anyway
        sid = make_session(client)
        body = '{"class": 0, "features": [NaN' + ", 0.0" * 15 + "]}"
        resp = client.post(
            f"/sessions/{sid}/samples",
            content=body,
            headers={"content-type": "application/json"},
        )
        assert resp.status_code == 400

    def test_image_sample_staged(self, client):
        sid = make_session(client)
        pixels = base64.b64encode(bytes(range(256)) * 4).decode()
        resp = client.post(
            f"/sessions/{sid}/samples",
            json={"class": 1, "image": {"width": 32, "height": 32, "pixels_base64": pixels}},
        )
        assert resp.status_code == 200
        assert resp.json()["staged_counts"]["1"] == 1

    def test_bad_base64_rejected(self, client):
        sid = make_session(client)
        resp = client.post(
            f"/sessions/{sid}/samples",
            json={"class": 0, "image": {"width": 2, "height": 2, "pixels_base64": "!!!"}},
        )
        assert resp.status_code == 400

    def test_staging_bound_gives_413(self):
        app = create_app(default_dim=4, default_classes=2, staging_limit=3)
        with TestClient(app) as client:
            sid = make_session(client, dim=4, classes=2)
            for i in range(3):
                assert stage(client, sid, 0, np.zeros(4)).status_code == 200
            assert stage(client, sid, 0, np.zeros(4)).status_code == 413

    def test_features_and_image_together_rejected(self, client):
        sid = make_session(client)
        resp = client.post(
            f"/sessions/{sid}/samples",
            json={
                "class": 0,
                "features": [0.0] * 16,
                "image": {"width": 1, "height": 1, "pixels_base64": "AA=="},
            },
        )
        assert resp.status_code == 400


class TestTrain:
    def test_staged_all_trains_once_and_clears(self, client):
        sid = make_session(client)
        rng = np.random.default_rng(1)
        for c in range(4):
            for _ in range(50):
                stage(client, sid, c, rng.standard_normal(16) + 3 * c)
        resp = client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"})
        assert resp.status_code == 200
        event = resp.json()
        assert event["samples_seen"] == 200
        assert event["buffer"]["occupancy"] == 40  # quota 10 x 4 classes
        state = client.get(f"/sessions/{sid}/state").json()
        assert all(v == 0 for v in state["staged_counts"].values())

    def test_staged_class_trains_only_that_class(self, client):
        sid = make_session(client)
        rng = np.random.default_rng(2)
        for c in (0, 1):
            for _ in range(20):
                stage(client, sid, c, rng.standard_normal(16) + 3 * c)
        resp = client.post(f"/sessions/{sid}/train", json={"scope": "staged_class", "class": 0})
        assert resp.status_code == 200
        assert resp.json()["samples_seen"] == 20
        counts = client.get(f"/sessions/{sid}/state").json()["staged_counts"]
        assert counts["0"] == 0 and counts["1"] == 20

    def test_empty_staging_409(self, client):
        sid = make_session(client)
        assert client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"}).status_code == 409
        stage(client, sid, 1, np.zeros(16))
        resp = client.post(f"/sessions/{sid}/train", json={"scope": "staged_class", "class": 0})
        assert resp.status_code == 409

    def test_bad_scope_rejected(self, client):
        sid = make_session(client)
        assert client.post(f"/sessions/{sid}/train", json={"scope": "everything"}).status_code == 400


class TestPredict:
    def test_prediction_shape_and_purity(self, client):
        sid = make_session(client)
        vec = [0.5] * 16
        a = client.post(f"/sessions/{sid}/predict", json={"features": vec})
        b = client.post(f"/sessions/{sid}/predict", json={"features": vec})
        assert a.status_code == 200
        assert a.json() == b.json()
        probs = a.json()["probs"]
        assert len(probs) == 4
        assert abs(sum(probs) - 1.0) < 1e-5
        assert a.json()["label"] == int(np.argmax(probs))

    def test_trained_class_confidence_after_cumulative(self, client):
        # all four classes staged and trained together: high confidence on
        # training-like samples for every class
        sid = make_session(client)
        rng = np.random.default_rng(3)
        centers = rng.standard_normal((4, 16)) * 3
        for c in range(4):
            for _ in range(50):
                stage(client, sid, c, centers[c] + rng.standard_normal(16) * 0.5)
        client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"})
        for c in range(4):
            probe = centers[c] + rng.standard_normal(16) * 0.5
            out = client.post(f"/sessions/{sid}/predict", json={"features": [float(v) for v in probe]}).json()
            assert out["label"] == c
            assert out["probs"][c] >= 0.99

    def test_non_finite_rejected(self, client):
        sid = make_session(client)
        body = '{"features": [Infinity' + ", 0.0" * 15 + "]}"
        resp = client.post(
            f"/sessions/{sid}/predict",
            content=body,
            headers={"content-type": "application/json"},
        )
        assert resp.status_code == 400

    def test_image_predict_deterministic(self, client):
        sid = make_session(client)
        pixels = base64.b64encode(bytes(range(256)) * 4).decode()
        body = {"image": {"width": 32, "height": 32, "pixels_base64": pixels}}
        a = client.post(f"/sessions/{sid}/predict", json=body)
        b = client.post(f"/sessions/{sid}/predict", json=body)
        assert a.json() == b.json()


class TestResetAndState:
    def test_reset_clears_everything_but_keeps_id(self, client):
        sid = make_session(client)
        rng = np.random.default_rng(4)
        for c in range(4):
            for _ in range(20):
                stage(client, sid, c, rng.standard_normal(16) + 3 * c)
        client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"})
        before = client.post(f"/sessions/{sid}/predict", json={"features": [1.0] * 16}).json()
        resp = client.post(f"/sessions/{sid}/reset")
        assert resp.status_code == 200 and resp.json() == {"ok": True}
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["buffer"]["occupancy"] == 0
        assert state["history"][-1]["kind"] == "reset"
        after = client.post(f"/sessions/{sid}/predict", json={"features": [1.0] * 16}).json()
        assert after != before

    def test_fresh_session_state(self, client):
        sid = make_session(client)
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["history"] == []
        assert state["buffer"]["occupancy"] == 0
        assert state["mode"] == "cl"

    def test_tl_state_has_no_buffer_field(self, client):
        sid = make_session(client, mode="tl")
        state = client.get(f"/sessions/{sid}/state").json()
        assert "buffer" not in state

    def test_history_grows_per_train(self, client):
        sid = make_session(client)
        rng = np.random.default_rng(5)
        for i in range(2):
            for _ in range(10):
                stage(client, sid, i, rng.standard_normal(16))
            client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"})
        assert len(client.get(f"/sessions/{sid}/state").json()["history"]) == 2

    def test_expired_session_404(self):
        app = create_app(default_dim=4, idle_timeout_s=0.0)
        with TestClient(app) as client:
            sid = make_session(client, dim=4)
            resp = client.get(f"/sessions/{sid}/state")
            assert resp.status_code == 404


class TestSchemaStability:
    def test_every_response_matches_its_documented_shape(self, client):
        created = client.post("/sessions", json={"mode": "cl", "dim": 16, "classes": 4}).json()
        assert set(created) == {"id", "config"}
        assert set(created["config"]) == {
            "mode", "dim", "classes", "hidden", "train_config", "buffer_config",
        }
        assert set(created["config"]["train_config"]) == {
            "learning_rate", "epochs_per_batch", "minibatch_size", "seed", "replay_schedule",
        }
        assert set(created["config"]["buffer_config"]) == {
            "capacity", "policy", "replace_fraction", "seed", "quota",
        }
        sid = created["id"]

        staged = stage(client, sid, 0, np.ones(16)).json()
        assert set(staged) == {"staged_counts"}
        assert set(staged["staged_counts"]) == {"0", "1", "2", "3"}

        event = client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"}).json()
        assert set(event) == {
            "kind", "tag", "samples_seen", "epochs_run", "final_loss",
            "buffer_occupancy", "duration_ms", "buffer",
        }
        assert set(event["buffer"]) == {"occupancy", "histogram"}

        predicted = client.post(f"/sessions/{sid}/predict", json={"features": [0.0] * 16}).json()
        assert set(predicted) == {"label", "probs"}

        state = client.get(f"/sessions/{sid}/state").json()
        assert set(state) == {"mode", "config", "history", "staged_counts", "buffer"}
        assert set(state["history"][0]) == {
            "kind", "tag", "samples_seen", "epochs_run", "final_loss",
            "buffer_occupancy", "duration_ms",
        }

        assert client.post(f"/sessions/{sid}/reset").json() == {"ok": True}

    def test_tl_shapes_omit_buffer_everywhere(self, client):
        sid = make_session(client, mode="tl")
        stage(client, sid, 0, np.ones(16))
        event = client.post(f"/sessions/{sid}/train", json={"scope": "staged_all"}).json()
        assert "buffer" not in event
        assert event["buffer_occupancy"] is None
        state = client.get(f"/sessions/{sid}/state").json()
        assert "buffer" not in state
        assert "buffer_config" not in state["config"]


class TestSerialization:
    def test_concurrent_requests_one_session(self, client):
        sid = make_session(client, mode="tl", dim=8)
        errors = []

        def hammer(worker):
            rng = np.random.default_rng(worker)
            try:
                for _ in range(5):
                    r = stage(client, sid, worker % 4, rng.standard_normal(8))
                    assert r.status_code == 200
                    r = client.post(f"/sessions/{sid}/predict", json={"features": [0.0] * 8})
                    assert r.status_code == 200
            except Exception as e:  # propagate to the main thread
                errors.append(e)

        threads = [threading.Thread(target=hammer, args=(w,)) for w in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        counts = client.get(f"/sessions/{sid}/state").json()["staged_counts"]
        assert sum(counts.values()) == 30


class TestDemoScenarioOverApi:
    """The incremental 4-class demo flow, driven API-level.

    Replay keeps the continually trained session accurate on every class
    while the replay-free twin collapses onto the last class it saw.
    """

    def test_new_classes_flow_tl_vs_cl(self):
        app = create_app(default_dim=32, default_classes=4, default_capacity=40, default_quota=10)
        with TestClient(app) as client:
            train, test, manifest = generate_synthetic(
                SynthSpec(num_classes=4, samples_per_instance=60, dim=32, seed=11)
            )
            cfg = {"train_config": {"seed": 0}}
            tl = make_session(client, mode="tl", dim=32, **cfg)
            cl = make_session(client, mode="cl", dim=32, **cfg)

            for spec in manifest.batches:
                cls = int(train.labels[spec.indices[0]])
                for i in spec.indices:
                    for sid in (tl, cl):
                        assert stage(client, sid, cls, train.features[i]).status_code == 200
                for sid in (tl, cl):
                    resp = client.post(
                        f"/sessions/{sid}/train", json={"scope": "staged_class", "class": cls}
                    )
                    assert resp.status_code == 200

            cl_state = client.get(f"/sessions/{cl}/state").json()
            assert cl_state["buffer"]["occupancy"] == 40

            def vote(sid, cls):
                feats = test.features[test.labels == cls]
                labels = [
                    client.post(
                        f"/sessions/{sid}/predict",
                        json={"features": [float(v) for v in feats[i]]},
                    ).json()["label"]
                    for i in range(0, len(feats), 3)
                ]
                return int(np.bincount(labels, minlength=4).argmax())

            cl_correct = sum(1 for c in range(4) if vote(cl, c) == c)
            tl_stuck = sum(1 for c in range(3) if vote(tl, c) == 3)
            assert cl_correct >= 3, f"replay session only got {cl_correct}/4 classes"
            assert tl_stuck >= 2, f"replay-free session stuck on last class for {tl_stuck}/3"
