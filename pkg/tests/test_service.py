import io
import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from spotlight import pipeline
from spotlight.corpus import load_collection, save_collection
from spotlight.embed import EmbedderConfig
from spotlight.index import build_index, load_index
from spotlight.proposals import SelectiveSearchConfig
from spotlight.service import Engine, EngineConfig, create_app
from spotlight.simhead import SimilarityHead
from synth import retrieval_corpus

FIXTURE = Path(__file__).parent.parent / "frontend" / "fixtures" / "query-response.json"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    collection = retrieval_corpus(seed=31, pages=6, categories=2, copies=3,
                                  page_side=240)
    manifest = save_collection(collection, root / "corpus")
    collection = load_collection(manifest)

    cfg = SelectiveSearchConfig()
    candidates = pipeline.propose_all(collection, cfg)
    embedder = pipeline.fit_embedder(collection, candidates,
                                     EmbedderConfig(target_dim=128,
                                                    reduction="pca"))
    pipeline.embed_all(collection, candidates, embedder)
    index_path = root / "index.spotidx"
    build_index(candidates, index_path)
    embedder.save(index_path)

    head = SimilarityHead(w=-3.0, b=2.0, dim=128,
                          trained_on={"metric": "euclidean"})
    head.save(root / "head.json")

    config = {"corpus": str(manifest), "index": str(index_path),
              "head": str(root / "head.json"), "mode": "ps", "top_k": 10,
              "metric": "cosine", "port": 8099}
    config_path = root / "engine.json"
    config_path.write_text(json.dumps(config))
    return {"root": root, "manifest": manifest, "index": index_path,
            "config": config_path, "collection": collection}


@pytest.fixture(scope="module")
def client(workspace):
    engine = Engine.from_config(EngineConfig.from_json(workspace["config"]))
    return TestClient(create_app(engine))


class TestQueryEndpoint:
    def query_body(self, workspace, **overrides):
        query = workspace["collection"].queries[0]
        body = {"doc_id": query.source_doc, "box": query.box.to_list(),
                "mode": "ps", "top_k": 10, "metric": "cosine"}
        body.update(overrides)
        return body

    def test_self_box_rank_one(self, client, workspace):
        query = workspace["collection"].queries[0]
        resp = client.post("/query", json=self.query_body(workspace))
        assert resp.status_code == 200
        payload = resp.json()
        top = payload["hits"][0]
        assert top["rank"] == 1
        assert top["doc_id"] == query.source_doc
        assert top["box"] == query.box.to_list()
        assert top["score"] == pytest.approx(0.0, abs=1e-6)
        assert set(payload["timings"]) == {"embed_ms", "scan_ms", "postproc_ms"}

    def test_unknown_document_404(self, client, workspace):
        resp = client.post("/query",
                           json=self.query_body(workspace, doc_id="nope"))
        assert resp.status_code == 404

    def test_malformed_box_400(self, client, workspace):
        resp = client.post("/query",
                           json=self.query_body(workspace, box=[0, 0, 0, 10]))
        assert resp.status_code == 400
        assert "box" in resp.json()["detail"]

    def test_out_of_bounds_box_400(self, client, workspace):
        resp = client.post("/query",
                           json=self.query_body(workspace, box=[230, 230, 40, 40]))
        assert resp.status_code == 400

    def test_identical_requests_identical_responses(self, client, workspace):
        body = self.query_body(workspace)
        a = client.post("/query", json=body).json()
        b = client.post("/query", json=body).json()
        assert a["hits"] == b["hits"]

    def test_learned_head_metric(self, client, workspace):
        resp = client.post("/query",
                           json=self.query_body(workspace, metric="learned-head"))
        assert resp.status_code == 200
        scores = [h["score"] for h in resp.json()["hits"]]
        assert scores == sorted(scores, reverse=True)

    def test_head_dim_mismatch_409(self, workspace):
        bad_head = SimilarityHead(w=-1.0, b=0.0, dim=64)
        engine = Engine.from_config(EngineConfig.from_json(workspace["config"]))
        engine.head = bad_head
        mis_client = TestClient(create_app(engine))
        resp = mis_client.post("/query", json=self.query_body(
            workspace, metric="learned-head"))
        assert resp.status_code == 409

    def test_postprocess_toggle(self, client, workspace):
        body = self.query_body(workspace,
                               postprocess={"retain": 50, "emit": 20,
                                            "merge_iou": 0.2})
        resp = client.post("/query", json=body)
        assert resp.status_code == 200
        docs_boxes = [(h["doc_id"], tuple(h["box"])) for h in resp.json()["hits"]]
        assert len(docs_boxes) == len(set(docs_boxes))

    def test_explicit_vector_query(self, client, workspace):
        idx = load_index(workspace["index"])
        vec = idx.vectors[0].astype(float).tolist()
        resp = client.post("/query", json={"vector": vec, "mode": "ps",
                                           "top_k": 5, "metric": "cosine"})
        assert resp.status_code == 200
        assert resp.json()["hits"][0]["score"] == pytest.approx(0.0, abs=1e-6)

    def test_response_matches_shared_fixture_schema(self, client, workspace):
        fixture = json.loads(FIXTURE.read_text())
        live = client.post("/query", json=self.query_body(workspace)).json()
        assert set(live) == set(fixture)
        assert set(live["timings"]) == set(fixture["timings"])
        for key in ("rank", "doc_id", "box", "score"):
            assert key in live["hits"][0]
            assert type(live["hits"][0][key]) == type(fixture["hits"][0][key])


class TestPageEndpoints:
    def test_page_png(self, client, workspace):
        doc_id = workspace["collection"].doc_ids[0]
        resp = client.get(f"/page/{doc_id}")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        img = Image.open(io.BytesIO(resp.content))
        doc = workspace["collection"].docs[doc_id]
        assert img.size == (doc.width, doc.height)
        # served pixels equal the stored plane
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
        assert np.array_equal(arr, doc.gray)

    def test_page_404(self, client):
        assert client.get("/page/absent").status_code == 404

    def test_ground_truth_overlay_passthrough(self, client, workspace):
        col = workspace["collection"]
        doc_id = col.ground_truth.occurrences(col.queries[0].category)[0].doc_id
        resp = client.get(f"/page/{doc_id}/boxes")
        assert resp.status_code == 200
        served = resp.json()
        want = []
        for cat, occs in col.ground_truth.by_category.items():
            for o in occs:
                if o.doc_id == doc_id:
                    want.append({"category": cat, "box": o.box.to_list(),
                                 "junk": o.junk})
        assert served["ground_truth"] == want

    def test_docs_listing(self, client, workspace):
        resp = client.get("/docs")
        docs = resp.json()["docs"]
        assert [d["doc_id"] for d in docs] == workspace["collection"].doc_ids
        for d in docs:
            assert d["width"] > 0 and d["height"] > 0

    def test_config_endpoint(self, client, workspace):
        cfg = client.get("/config").json()
        assert cfg["dim"] == 128
        assert cfg["documents"] == 6
        assert "learned-head" in cfg["metrics"]

    def test_bench_endpoint(self, client):
        resp = client.post("/bench", json={"queries": 3})
        assert resp.status_code == 200
        stats = resp.json()
        assert stats["n"] == 3
        assert stats["mean_ms"] > 0
        assert stats["p95_ms"] >= stats["p50_ms"] >= 0


UI_DIST = Path(__file__).parent.parent / "frontend" / "dist"


@pytest.mark.skipif(not (UI_DIST / "index.html").exists(),
                    reason="UI bundle not built; engine runs fine without it")
class TestUiMount:
    def test_ui_served_statically(self, workspace):
        engine = Engine.from_config(EngineConfig.from_json(workspace["config"]))
        ui_client = TestClient(create_app(engine, ui_dir=str(UI_DIST)))
        page = ui_client.get("/ui/")
        assert page.status_code == 200
        assert "main.js" in page.text
        script = ui_client.get("/ui/main.js")
        assert script.status_code == 200
        root = ui_client.get("/", follow_redirects=False)
        assert root.status_code in (302, 307)
        assert root.headers["location"] == "/ui/"
