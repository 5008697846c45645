"""Long-running HTTP service over a built index.

The engine loads everything read-only at startup (corpus, index, embedder,
optional similarity head); re-indexing means restarting, which keeps the
query path stateless and safe for concurrent reads. Responses are JSON,
page images are PNG. Endpoints: POST /query, GET /page/{doc_id},
GET /page/{doc_id}/boxes, GET /docs, GET /config, POST /bench. When a UI
bundle directory is configured it is served under /ui.
"""

from __future__ import annotations

import io
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel

from .corpus import BoundingBox, Collection, CorpusError, crop, load_collection
from .embed import Embedder
from .index import Index, load_index
from .pipeline import SearchSettings, run_query
from .postproc import UnionConfig
from .simhead import SimilarityHead

ENV_CONFIG = "SPOTLIGHT_CONFIG"


class ServiceError(Exception):
    pass


@dataclass
class EngineConfig:
    corpus: str
    index: str
    head: str | None = None
    embedder_prefix: str | None = None    # defaults to the index path
    port: int = 8080
    ui_dir: str | None = None
    mode: str = "ps"
    top_k: int = 10
    metric: str = "cosine"
    postprocess: dict | None = None       # {"retain":, "emit":, "merge_iou":}

    @classmethod
    def from_json(cls, path: str | Path) -> "EngineConfig":
        raw = json.loads(Path(path).read_text())
        cfg = cls(**raw)
        base = Path(path).parent
        cfg.corpus = str((base / cfg.corpus).resolve())
        cfg.index = str((base / cfg.index).resolve())
        if cfg.head:
            cfg.head = str((base / cfg.head).resolve())
        if cfg.embedder_prefix:
            cfg.embedder_prefix = str((base / cfg.embedder_prefix).resolve())
        if cfg.ui_dir:
            cfg.ui_dir = str((base / cfg.ui_dir).resolve())
        return cfg

    @classmethod
    def from_env(cls) -> "EngineConfig":
        path = os.environ.get(ENV_CONFIG)
        if not path:
            raise ServiceError(f"set {ENV_CONFIG} or pass an explicit config path")
        return cls.from_json(path)


@dataclass
class QueryOutcome:
    hits: list[dict]
    timings: dict[str, float]
    mode: str
    metric: str
    top_k: int


class Engine:
    """Read-only query engine binding corpus + index + embedder + head."""

    def __init__(self, collection: Collection, index: Index,
                 embedder: Embedder | None, head: SimilarityHead | None = None,
                 defaults: SearchSettings | None = None):
        self.collection = collection
        self.index = index
        self.embedder = embedder
        self.head = head
        self.defaults = defaults or SearchSettings()
        if head is not None and head.dim and index.dim and head.dim != index.dim:
            raise ServiceError(f"similarity head dim {head.dim} != index dim "
                               f"{index.dim}")

    @classmethod
    def from_config(cls, cfg: EngineConfig) -> "Engine":
        collection = load_collection(cfg.corpus)
        index = load_index(cfg.index)
        prefix = cfg.embedder_prefix or cfg.index
        embedder = None
        if Path(str(prefix) + ".embedder.json").exists():
            embedder = Embedder.load(prefix)
        head = SimilarityHead.load(cfg.head) if cfg.head else None
        post = None
        if cfg.postprocess:
            post = UnionConfig(**cfg.postprocess)
        defaults = SearchSettings(mode=cfg.mode, top_k=cfg.top_k,
                                  metric=cfg.metric, head=head, postprocess=post)
        return cls(collection, index, embedder, head, defaults)

    def query(self, doc_id: str, box: BoundingBox, mode: str | None = None,
              top_k: int | None = None, metric: str | None = None,
              postprocess: bool | dict | None = None,
              vector: list[float] | None = None) -> QueryOutcome:
        mode = mode or self.defaults.mode
        top_k = top_k or self.defaults.top_k
        metric = metric or self.defaults.metric

        head = None
        if metric == "learned-head":
            head = self.head
            if head is None:
                raise ServiceError("no similarity head loaded")
            if head.dim and head.dim != self.index.dim:
                raise ServiceError(f"similarity head dim {head.dim} != index dim "
                                   f"{self.index.dim}")

        post = self.defaults.postprocess
        if postprocess is False:
            post = None
        elif isinstance(postprocess, dict):
            post = UnionConfig(**postprocess)
        elif postprocess is True and post is None:
            post = UnionConfig()

        t0 = time.perf_counter()
        if vector is not None:
            qvec = np.asarray(vector, dtype=np.float64)
            if qvec.shape[0] != self.index.dim:
                raise ServiceError(f"query vector dim {qvec.shape[0]} != index dim "
                                   f"{self.index.dim}")
        else:
            if self.embedder is None:
                raise ServiceError("index was built from external vectors; "
                                   "pass an explicit query vector")
            doc = self.collection.doc(doc_id)
            if not doc.contains(box):
                raise CorpusError(f"box {box.to_list()} exceeds bounds of {doc_id!r}")
            qvec = self.embedder.embed_patch(crop(doc, box)).values
        t_embed = time.perf_counter() - t0

        settings = SearchSettings(mode=mode, top_k=top_k, metric=metric,
                                  head=head, postprocess=None,
                                  workers=self.defaults.workers)
        t0 = time.perf_counter()
        hits = run_query(self.index, qvec, settings)
        t_scan = time.perf_counter() - t0

        t0 = time.perf_counter()
        if post is not None:
            settings_pp = SearchSettings(mode=mode, top_k=top_k, metric=metric,
                                         head=head, postprocess=post,
                                         workers=self.defaults.workers)
            hits = run_query(self.index, qvec, settings_pp)
        t_post = time.perf_counter() - t0

        return QueryOutcome(
            hits=[{"rank": h.rank, "doc_id": h.doc_id, "box": h.box.to_list(),
                   "score": h.score} for h in hits],
            timings={"embed_ms": t_embed * 1e3, "scan_ms": t_scan * 1e3,
                     "postproc_ms": t_post * 1e3},
            mode=mode, metric=metric, top_k=top_k)

    def page_png(self, doc_id: str) -> bytes:
        doc = self.collection.doc(doc_id)
        if doc.color is not None:
            arr = np.clip(np.rint(doc.color * 255.0), 0, 255).astype(np.uint8)
            img = Image.fromarray(arr, mode="RGB")
        else:
            arr = np.clip(np.rint(doc.gray * 255.0), 0, 255).astype(np.uint8)
            img = Image.fromarray(arr, mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    def page_boxes(self, doc_id: str) -> dict:
        doc = self.collection.doc(doc_id)
        boxes = []
        for category, occs in self.collection.ground_truth.by_category.items():
            for occ in occs:
                if occ.doc_id == doc_id:
                    boxes.append({"category": category, "box": occ.box.to_list(),
                                  "junk": occ.junk})
        return {"doc_id": doc_id, "width": doc.width, "height": doc.height,
                "ground_truth": boxes}

    def doc_summaries(self) -> list[dict]:
        return [{"doc_id": d, "width": self.collection.docs[d].width,
                 "height": self.collection.docs[d].height}
                for d in self.collection.doc_ids]

    def config_summary(self) -> dict:
        return {
            "dim": self.index.dim,
            "candidates": self.index.count,
            "documents": len(self.collection.docs),
            "queries": len(self.collection.queries),
            "mode": self.defaults.mode,
            "top_k": self.defaults.top_k,
            "metric": self.defaults.metric,
            "metrics": ["cosine", "euclidean"] + (
                ["learned-head"] if self.head is not None else []),
            "postprocess": None if self.defaults.postprocess is None else {
                "retain": self.defaults.postprocess.retain,
                "emit": self.defaults.postprocess.emit,
                "merge_iou": self.defaults.postprocess.merge_iou,
            },
            "embedder": None if self.embedder is None else {
                "kind": self.embedder.config.kind,
                "target_dim": self.embedder.config.target_dim,
                "reduction": self.embedder.config.reduction,
                "resize": self.embedder.config.resize,
            },
        }

    def bench(self, n_queries: int = 20, mode: str | None = None,
              metric: str | None = None, seed: int = 0) -> dict:
        """Latency over synthetic unit-norm queries against the live index."""
        rng = np.random.default_rng(seed)
        mode = mode or self.defaults.mode
        metric = metric or self.defaults.metric
        head = self.head if metric == "learned-head" else None
        settings = SearchSettings(mode=mode, top_k=self.defaults.top_k,
                                  metric=metric, head=head)
        times = []
        for _ in range(n_queries):
            q = rng.standard_normal(self.index.dim)
            q /= np.linalg.norm(q)
            t0 = time.perf_counter()
            run_query(self.index, q, settings)
            times.append((time.perf_counter() - t0) * 1e3)
        times.sort()
        return {"n": n_queries, "mode": mode, "metric": metric,
                "mean_ms": float(np.mean(times)),
                "p50_ms": float(times[len(times) // 2]),
                "p95_ms": float(times[min(len(times) - 1, int(0.95 * len(times)))]),
                }


class QueryBody(BaseModel):
    doc_id: str = ""
    box: list[int] | None = None
    mode: str | None = None
    top_k: int | None = None
    metric: str | None = None
    postprocess: bool | dict | None = None
    vector: list[float] | None = None


class BenchBody(BaseModel):
    queries: int = 20
    mode: str | None = None
    metric: str | None = None


def create_app(engine: Engine, ui_dir: str | None = None):
    """FastAPI application bound to one read-only engine."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse, RedirectResponse, Response

    # /docs is the corpus listing here, so FastAPI's interactive docs move
    app = FastAPI(title="spotlight", version="0.1.0",
                  docs_url="/apidocs", redoc_url=None)

    @app.post("/query")
    def query(body: QueryBody):
        box = None
        if body.vector is None:
            if body.doc_id not in engine.collection.docs:
                raise HTTPException(status_code=404,
                                    detail=f"unknown document {body.doc_id!r}")
            try:
                box = BoundingBox.from_list(body.box)
            except CorpusError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            outcome = engine.query(body.doc_id, box, mode=body.mode,
                                   top_k=body.top_k, metric=body.metric,
                                   postprocess=body.postprocess,
                                   vector=body.vector)
        except CorpusError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ServiceError as exc:
            detail = str(exc)
            status = 409 if "dim" in detail else 400
            raise HTTPException(status_code=status, detail=detail) from exc
        return JSONResponse({"hits": outcome.hits, "timings": outcome.timings,
                             "mode": outcome.mode, "metric": outcome.metric,
                             "top_k": outcome.top_k})

    @app.get("/page/{doc_id}")
    def page(doc_id: str):
        if doc_id not in engine.collection.docs:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}")
        return Response(content=engine.page_png(doc_id), media_type="image/png")

    @app.get("/page/{doc_id}/boxes")
    def page_boxes(doc_id: str):
        if doc_id not in engine.collection.docs:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}")
        return JSONResponse(engine.page_boxes(doc_id))

    @app.get("/docs")
    def docs():
        return JSONResponse({"docs": engine.doc_summaries()})

    @app.get("/config")
    def config():
        return JSONResponse(engine.config_summary())

    @app.post("/bench")
    def bench(body: BenchBody):
        return JSONResponse(engine.bench(n_queries=body.queries, mode=body.mode,
                                         metric=body.metric))

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

        @app.get("/")
        def root():
            return RedirectResponse(url="/ui/")

    return app


def serve(config: EngineConfig) -> None:
    import uvicorn
    engine = Engine.from_config(config)
    app = create_app(engine, ui_dir=config.ui_dir)
    uvicorn.run(app, host="127.0.0.1", port=config.port)
