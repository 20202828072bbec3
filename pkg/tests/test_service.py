import json
import time

import pytest
from fastapi.testclient import TestClient

from igaiva.gencorpus import CorpusSpec, generate_corpus, save_synonyms
from igaiva.service import create_app
from tests.conftest import TABLE1_SIZES, build_table1_dataset


def wait_for_job(client, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/jobs/{job_id}").json()
        if doc["state"] in ("done", "failed"):
            return doc
        time.sleep(0.02)
    raise TimeoutError(job_id)


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "store")
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def seeded(tmp_path, client):
    """Template corpus uploaded + split, ready for the pipeline endpoints."""
    dataset, synonyms = generate_corpus(CorpusSpec(n_classes=3, class_size=30, seed=4))
    syn_path = tmp_path / "synonyms.json"
    save_synonyms(synonyms, syn_path)
    records = [m.to_record() for m in dataset.messages]
    resp = client.post("/datasets", json={"name": "demo", "records": records, "main": True})
    assert resp.status_code == 200, resp.text
    resp = client.post("/split", json={"dataset": "demo", "test_fraction": 0.2, "seed": 1})
    assert resp.status_code == 200, resp.text
    split_id = resp.json()["split_id"]
    return {"dataset": "demo", "split": split_id, "synonyms": str(syn_path)}


class TestHealthAndDatasets:
    def test_health(self, client, tmp_path):
        doc = client.get("/health").json()
        assert doc["status"] == "ok"
        assert str(tmp_path / "store") in doc["store"]

    def test_table1_dataset_listing(self, client):
        ds = build_table1_dataset()
        records = [m.to_record() for m in ds.messages]
        client.post("/datasets", json={"name": "table1", "records": records, "main": True})
        listing = client.get("/datasets").json()["datasets"]
        entry = next(e for e in listing if e["name"] == "table1")
        assert entry["classes"] == 15
        assert entry["total"] == 39100
        detail = client.get("/datasets/table1").json()
        assert detail["classes"]["T2"] == TABLE1_SIZES["T2"]

    def test_upload_validation(self, client):
        resp = client.post("/datasets", json={"name": "x"})
        assert resp.status_code == 400
        assert "records" in resp.json()["error"]

    def test_unknown_dataset_404ish(self, client):
        resp = client.get("/datasets/ghost")
        assert resp.status_code == 400
        assert "not in cache" in resp.json()["error"]


class TestSplitEndpoint:
    def test_split_counts(self, seeded, client):
        resp = client.post("/split", json={"dataset": "demo", "test_fraction": 0.2, "seed": 9})
        doc = resp.json()
        assert doc["train_size"] + doc["test_size"] == 90
        assert all(v == 6 for v in doc["test_counts"].values())  # round(0.2 * 30)


class TestProjectionEndpoint:
    def test_pca_projection_roles(self, seeded, client):
        resp = client.get(
            "/projection",
            params={"dataset": "demo", "split": seeded["split"], "method": "pca", "dims": "0,1"},
        )
        doc = resp.json()
        assert len(doc["ids"]) == 90
        assert set(doc["roles"]) <= {"train", "test"}
        assert doc["params"]["dims"] == [0, 1]

    def test_focus_class_grey_context(self, seeded, client):
        resp = client.get(
            "/projection",
            params={
                "dataset": "demo",
                "split": seeded["split"],
                "class": "T1",
                "dims": "0,1",
            },
        )
        doc = resp.json()
        roles = dict(zip(doc["labels"], doc["roles"]))
        assert roles.get("T2") == "other"

    def test_bad_method(self, seeded, client):
        resp = client.get(
            "/projection",
            params={"dataset": "demo", "split": seeded["split"], "method": "umap"},
        )
        assert resp.status_code == 400


def run_full_loop(client, seeded, k=3):
    """select -> synthesize -> train(with batch) -> compare; returns ids."""
    select = client.post(
        "/select",
        json={
            "dataset": "demo",
            "split": seeded["split"],
            "mode": "random",
            "class": "T3",
            "n": 4,
            "seed": 2,
        },
    ).json()
    assert select["count"] == 4
    synth = client.post(
        "/synthesize",
        json={
            "dataset": "demo",
            "split": seeded["split"],
            "target_label": "T3",
            "example_ids": select["ids"],
            "k": k,
            "seed": 3,
            "generator": "mock",
            "synonyms": seeded["synonyms"],
        },
    ).json()
    assert wait_for_job(client, synth["job"])["state"] == "done"
    config = {"epochs": 4, "learning_rate": 0.8, "l2": 1e-4, "batch_size": 32, "seed": 0}
    baseline = client.post(
        "/train",
        json={"dataset": "demo", "split": seeded["split"], "additions": [], "config": config},
    ).json()
    assert wait_for_job(client, baseline["job"])["state"] == "done"
    retrain = client.post(
        "/train",
        json={
            "dataset": "demo",
            "split": seeded["split"],
            "additions": [synth["batch_id"]],
            "config": config,
        },
    ).json()
    assert wait_for_job(client, retrain["job"])["state"] == "done"
    return select, synth, baseline, retrain


class TestPipelineEndpoints:
    def test_full_loop_and_compare(self, seeded, client):
        select, synth, baseline, retrain = run_full_loop(client, seeded)
        compare = client.get(
            "/reports/compare", params={"ids": f"{baseline['experiment']},{retrain['experiment']}"}
        ).json()
        assert len(compare["deltas"]) == 1
        delta = compare["deltas"][0]
        assert delta["train_deltas"]["T3"] == 12  # 4 examples x k=3
        assert "| Overall |" in compare["markdown"]
        reports = client.get("/reports").json()["reports"]
        assert {r["experiment"] for r in reports} >= {baseline["experiment"], retrain["experiment"]}

    def test_selection_never_returns_test_ids(self, seeded, client):
        split_doc = json.loads(
            (client.app.state.igaiva.store.root / "splits" / f"{seeded['split']}.json").read_text()
        )
        test_ids = set(split_doc["test_ids"])
        for mode_body in (
            {"mode": "random", "class": "T1", "n": 20, "seed": 1},
            {"mode": "keywords", "class": "T1", "terms": ["monitor", "teclado", "pantalla"]},
            {
                "mode": "region",
                "region": {"kind": "rect", "x0": -100, "y0": -100, "x1": 100, "y1": 100},
            },
        ):
            body = {"dataset": "demo", "split": seeded["split"], **mode_body}
            doc = client.post("/select", json=body).json()
            assert not set(doc["ids"]) & test_ids, mode_body["mode"]

    def test_heatmap_after_training(self, seeded, client):
        _, _, baseline, _ = run_full_loop(client, seeded)
        resp = client.get(
            "/heatmap",
            params={
                "dataset": "demo",
                "split": seeded["split"],
                "report": baseline["experiment"],
                "epsilon": 0.2,
                "grid_w": 16,
                "grid_h": 16,
            },
        )
        doc = resp.json()
        assert doc["width"] == 16 and doc["height"] == 16
        assert len(doc["values"]) == 256
        assert all(0.0 <= v <= 1.0 for v in doc["values"])
        assert len(doc["samples"]) == 18  # 3 classes x 6 test messages

    def test_job_progress_increases_to_one(self, seeded, client):
        config = {"epochs": 5, "learning_rate": 0.8, "l2": 1e-4, "batch_size": 32, "seed": 0}
        train = client.post(
            "/train",
            json={"dataset": "demo", "split": seeded["split"], "additions": [], "config": config},
        ).json()
        final = wait_for_job(client, train["job"])
        assert final["progress"] == 1.0
        fractions = [e["progress"] for e in final["events"] if "progress" in e]
        assert fractions == sorted(fractions) and fractions[-1] == 1.0

    def test_event_stream_reaches_terminal_state(self, seeded, client):
        config = {"epochs": 2, "learning_rate": 0.5, "l2": 0.0, "batch_size": 64, "seed": 0}
        train = client.post(
            "/train",
            json={"dataset": "demo", "split": seeded["split"], "additions": [], "config": config},
        ).json()
        with client.stream("GET", f"/jobs/{train['job']}/events") as resp:
            events = []
            for line in resp.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: ") :]))
                if events and events[-1].get("state") in ("done", "failed"):
                    break
        assert events[-1]["state"] == "done"
        assert events[-1]["progress"] == 1.0

    def test_merge_endpoint(self, seeded, client):
        select, synth, _, _ = run_full_loop(client, seeded)
        resp = client.post(
            "/merge",
            json={"base": "demo", "additions": [synth["batch_id"]], "name": "demo-plus"},
        )
        doc = resp.json()
        assert doc["total"] == 90 + 12
        listing = client.get("/datasets").json()["datasets"]
        assert any(e["name"] == "demo-plus" for e in listing)

    def test_session_tracks_state(self, seeded, client):
        client.get(
            "/projection",
            params={"dataset": "demo", "split": seeded["split"], "dims": "0,1"},
        )
        doc = client.get("/session").json()
        assert doc["projection"]["dims"] == [0, 1]


class TestIdempotency:
    def test_replayed_key_returns_prior_result(self, seeded, client):
        body = {
            "dataset": "demo",
            "split": seeded["split"],
            "mode": "random",
            "class": "T1",
            "n": 5,
            "seed": 1,
        }
        r1 = client.post("/select", json=body, headers={"Idempotency-Key": "k-1"})
        # different body, same key -> prior response comes back
        body2 = dict(body, n=9)
        r2 = client.post("/select", json=body2, headers={"Idempotency-Key": "k-1"})
        assert r1.json() == r2.json()
        assert r2.json()["count"] == 5

    def test_train_replay_does_not_create_second_experiment(self, seeded, client):
        config = {"epochs": 2, "learning_rate": 0.5, "l2": 0.0, "batch_size": 64, "seed": 0}
        body = {"dataset": "demo", "split": seeded["split"], "additions": [], "config": config}
        r1 = client.post("/train", json=body, headers={"Idempotency-Key": "t-1"}).json()
        r2 = client.post("/train", json=body, headers={"Idempotency-Key": "t-1"}).json()
        assert r1 == r2
        wait_for_job(client, r1["job"])


class TestCorruptStore:
    def test_refuses_to_start(self, tmp_path):
        store = tmp_path / "store"
        store.mkdir()
        (store / "cache.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(Exception, match="corrupt store"):
            create_app(store)
