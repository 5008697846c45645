"""Batch orchestration: corpus -> proposals -> vectors -> index -> runs.

Every step is deterministic: documents are processed in sorted doc_id
order, candidate ids are assigned globally in that order, and worker
parallelism only distributes whole documents, so results never depend on
scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Collection, Query, crop
from .embed import Embedder, EmbedderConfig, FeatureVector
from .index import CandidateRegion, Index, RankedHit, SearchRequest, search
from .postproc import UnionConfig, union_merge
from .proposals import SelectiveSearchConfig, propose
from .simhead import SimilarityHead


class PipelineError(Exception):
    pass


def propose_all(collection: Collection, cfg: SelectiveSearchConfig,
                workers: int = 1) -> list[CandidateRegion]:
    """Proposals for every document, with collection-wide candidate ids."""
    doc_ids = collection.doc_ids

    def run_one(doc_id: str) -> list[CandidateRegion]:
        return propose(collection.doc(doc_id), cfg, base_id=0)

    if workers > 1 and len(doc_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_doc = list(pool.map(run_one, doc_ids))
    else:
        per_doc = [run_one(d) for d in doc_ids]

    out: list[CandidateRegion] = []
    next_id = 0
    for cands in per_doc:
        for c in cands:
            out.append(CandidateRegion(cand_id=next_id, doc_id=c.doc_id,
                                       box=c.box, vector=c.vector))
            next_id += 1
    return out


def fit_embedder(collection: Collection, candidates: list[CandidateRegion],
                 config: EmbedderConfig, sample_cap: int = 50_000,
                 seed: int = 0) -> Embedder:
    """Build the embedder, fitting its PCA reduction on a seeded subsample of
    candidate descriptors when fitting is required."""
    embedder = Embedder(config)
    if embedder.needs_fit():
        rng = np.random.default_rng(seed)
        take = min(sample_cap, len(candidates))
        if take < config.target_dim:
            # not enough descriptors for PCA; Embedder.fit falls back
            chosen = np.arange(len(candidates))
        else:
            chosen = np.sort(rng.choice(len(candidates), size=take, replace=False))
        sample = np.stack([
            embedder.raw_region_descriptor(collection.doc(candidates[i].doc_id),
                                           candidates[i].box)
            for i in chosen]) if len(chosen) else np.empty((0, embedder.raw_dim))
        embedder.fit(sample)
    return embedder


def embed_all(collection: Collection, candidates: list[CandidateRegion],
              embedder: Embedder) -> list[CandidateRegion]:
    """Embed every candidate in place; returns the same list."""
    for cand in candidates:
        vec = embedder.embed_region(collection.doc(cand.doc_id), cand.box)
        cand.vector = vec.values
    return candidates


def attach_vectors(candidates: list[CandidateRegion],
                   vectors: dict[str, FeatureVector]) -> list[CandidateRegion]:
    """Attach externally computed vectors, keyed by str(cand_id)."""
    missing = []
    for cand in candidates:
        key = str(cand.cand_id)
        if key in vectors:
            cand.vector = vectors[key].values
        else:
            missing.append(key)
    if missing:
        raise PipelineError(f"no vector supplied for candidate id(s) "
                            f"{', '.join(missing[:5])}"
                            + (" ..." if len(missing) > 5 else ""))
    return candidates


@dataclass
class SearchSettings:
    mode: str = "ps"
    top_k: int = 10
    metric: str = "cosine"
    head: SimilarityHead | None = None
    postprocess: UnionConfig | None = None
    workers: int = 1


def run_query(index: Index, query_vector: np.ndarray,
              settings: SearchSettings) -> list[RankedHit]:
    req = SearchRequest(query=np.asarray(query_vector, dtype=np.float64),
                        mode=settings.mode,
                        top_k=(settings.postprocess.retain
                               if settings.postprocess else settings.top_k),
                        metric=settings.metric, head=settings.head)
    hits = search(index, req, workers=settings.workers)
    if settings.postprocess:
        ascending = settings.metric != "learned-head"
        hits = union_merge(hits, settings.postprocess, ascending=ascending)
        hits = hits[: settings.top_k]
    return hits


def search_queries(collection: Collection, index: Index, embedder: Embedder,
                   settings: SearchSettings,
                   queries: list[Query] | None = None) -> dict[str, list[RankedHit]]:
    """Embed and search every query; returns hits keyed by query_id."""
    queries = collection.queries if queries is None else queries
    out: dict[str, list[RankedHit]] = {}
    for query in queries:
        patch = crop(collection.doc(query.source_doc), query.box)
        vec = embedder.embed_patch(patch)
        out[query.query_id] = run_query(index, vec.values, settings)
    return out
