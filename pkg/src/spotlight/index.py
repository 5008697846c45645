"""Candidate store and online exhaustive search.

The on-disk index is a flat binary file: magic ``SPOTIDX1``, little-endian
u32 vector dimension (0 while candidates are not yet embedded), u64 count,
a candidate table of (u64 cand_id, u32 doc-id length, UTF-8 doc id, box as
4 x u32), then the packed float32 vectors in table order. Vectors round-trip
bit-exactly.

Search scans every stored vector (no approximate structure), in fixed-size
chunks that can be fanned out to worker threads; per-chunk partial results
merge deterministically under the (score, doc_id, cand_id) tie rule, so the
ranked list never depends on chunking or thread scheduling. Scores are
computed and compared in float64 even though vectors are stored as float32.

Two search modes: PS returns the best candidates overall (locations within
pages); IR collapses each document to its best-scoring candidate and ranks
documents, so no page appears twice.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import BoundingBox

MAGIC = b"SPOTIDX1"
SCAN_CHUNK = 2048


class IndexError_(Exception):
    pass


@dataclass
class CandidateRegion:
    """One proposal box, optionally embedded; the unit the index stores."""

    cand_id: int
    doc_id: str
    box: BoundingBox
    vector: np.ndarray | None = None   # float32, unit norm once embedded


@dataclass(frozen=True)
class RankedHit:
    doc_id: str
    box: BoundingBox
    score: float
    rank: int


@dataclass(frozen=True)
class SearchRequest:
    """query: unit-norm vector; mode: 'ps' or 'ir'; metric: 'cosine',
    'euclidean', or 'learned-head' (requires `head`)."""

    query: np.ndarray
    mode: str = "ps"
    top_k: int = 10
    metric: str = "cosine"
    head: "object | None" = None    # simhead.SimilarityHead when learned-head

    def __post_init__(self):
        if self.top_k < 1:
            raise IndexError_(f"top_k must be >= 1, got {self.top_k}")
        if self.mode not in ("ps", "ir"):
            raise IndexError_(f"mode must be 'ps' or 'ir', got {self.mode!r}")
        if self.metric not in ("cosine", "euclidean", "learned-head"):
            raise IndexError_(f"unknown metric {self.metric!r}")
        if self.metric == "learned-head" and self.head is None:
            raise IndexError_("metric 'learned-head' requires a trained head")


@dataclass
class Index:
    """In-memory index: parallel arrays over candidates, immutable after load."""

    dim: int
    ids: np.ndarray            # (n,) uint64
    doc_ids: list[str]
    boxes: np.ndarray          # (n, 4) int64 as x, y, w, h
    vectors: np.ndarray | None # (n, dim) float32, None when dim == 0

    @property
    def count(self) -> int:
        return len(self.doc_ids)

    def candidates(self) -> list[CandidateRegion]:
        out = []
        for i in range(self.count):
            vec = self.vectors[i] if self.vectors is not None else None
            out.append(CandidateRegion(
                cand_id=int(self.ids[i]),
                doc_id=self.doc_ids[i],
                box=BoundingBox(*(int(v) for v in self.boxes[i])),
                vector=vec))
        return out


def build_index(candidates: list[CandidateRegion], path: str | Path) -> Path:
    """Persist candidates (embedded or not) to `path`; returns the path.

    All vectors must be present with one shared dimension, or all absent
    (dim recorded as 0).
    """
    n = len(candidates)
    dims = {0 if c.vector is None else int(np.asarray(c.vector).shape[0])
            for c in candidates}
    if len(dims) > 1:
        raise IndexError_(f"mixed vector dimensions in candidate list: {sorted(dims)}")
    dim = dims.pop() if dims else 0

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", dim, n))
        for c in candidates:
            doc = c.doc_id.encode("utf-8")
            fh.write(struct.pack("<Q", c.cand_id))
            fh.write(struct.pack("<I", len(doc)))
            fh.write(doc)
            fh.write(struct.pack("<IIII", c.box.x, c.box.y, c.box.w, c.box.h))
        if dim:
            block = np.stack([np.asarray(c.vector, dtype=np.float32)
                              for c in candidates])
            fh.write(block.tobytes(order="C"))
    return path


def load_index(path: str | Path) -> Index:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise IndexError_(f"{path} is not an index file (bad magic)")
    dim, n = struct.unpack_from("<IQ", data, 8)
    off = 8 + 12
    ids = np.empty(n, dtype=np.uint64)
    doc_ids: list[str] = []
    boxes = np.empty((n, 4), dtype=np.int64)
    for i in range(n):
        (cand_id,) = struct.unpack_from("<Q", data, off)
        off += 8
        (doc_len,) = struct.unpack_from("<I", data, off)
        off += 4
        doc_ids.append(data[off:off + doc_len].decode("utf-8"))
        off += doc_len
        boxes[i] = struct.unpack_from("<IIII", data, off)
        off += 16
        ids[i] = cand_id
    vectors = None
    if dim:
        expected = n * dim * 4
        if len(data) - off < expected:
            raise IndexError_(f"{path}: vector block truncated")
        vectors = np.frombuffer(data[off:off + expected],
                                dtype="<f4").reshape(n, dim).copy()
    return Index(dim=int(dim), ids=ids, doc_ids=doc_ids, boxes=boxes, vectors=vectors)


def index_from_candidates(candidates: list[CandidateRegion]) -> Index:
    """Build the in-memory form directly (no file), e.g. for benchmarks."""
    n = len(candidates)
    dims = {0 if c.vector is None else int(np.asarray(c.vector).shape[0])
            for c in candidates}
    if len(dims) > 1:
        raise IndexError_(f"mixed vector dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    ids = np.array([c.cand_id for c in candidates], dtype=np.uint64)
    boxes = np.array([[c.box.x, c.box.y, c.box.w, c.box.h] for c in candidates],
                     dtype=np.int64).reshape(n, 4)
    vectors = None
    if dim:
        vectors = np.stack([np.asarray(c.vector, dtype=np.float32)
                            for c in candidates]) if n else np.empty((0, dim), np.float32)
    return Index(dim=dim, ids=ids, doc_ids=[c.doc_id for c in candidates],
                 boxes=boxes, vectors=vectors)


# ---------------------------------------------------------------------------
# Scanning
# ---------------------------------------------------------------------------

def _chunk_scores(vectors: np.ndarray, query: np.ndarray, metric: str,
                  head) -> tuple[np.ndarray, bool]:
    """Scores for one chunk in float64.

    Returns (scores, ascending): ascending=True means smaller is better
    (distances); False means larger is better (learned-head similarity).
    """
    block = vectors.astype(np.float64)
    q = query.astype(np.float64)
    if metric == "cosine":
        return 1.0 - block @ q, True
    if metric == "euclidean":
        diff = block - q
        return np.sqrt(np.einsum("ij,ij->i", diff, diff)), True
    # learned-head: sigmoid of affine distance; ranking is by probability,
    # descending, which is rank-equivalent to the base distance when w < 0.
    diff = block - q
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return head.score(d), False


def _scan_chunk(index: Index, start: int, stop: int, req: SearchRequest):
    """Partial result for candidates [start, stop).

    PS: the chunk's top_k keys (plus exact boundary ties).
    IR: best key per document in the chunk.
    Keys are (score_key, doc_id, cand_id, row); score_key is the score
    negated for descending metrics so smaller is always better.
    """
    scores, ascending = _chunk_scores(index.vectors[start:stop], req.query,
                                      req.metric, req.head)
    if not ascending:
        scores = -scores
    rows = np.arange(start, stop)

    if req.mode == "ps":
        k = req.top_k
        if len(scores) > k:
            # Pre-filter by score alone (keeping exact boundary ties), then
            # rank by the full (score, doc_id, cand_id) key. The chunk's
            # top-k under the full key dominates anything dropped here, so
            # truncation cannot change the merged global top-k.
            kth = np.partition(scores, k - 1)[k - 1]
            keep = np.flatnonzero(scores <= kth)
        else:
            keep = np.arange(len(scores))
        out = [(float(scores[i]), index.doc_ids[start + i], int(index.ids[start + i]),
                int(rows[i])) for i in keep]
        out.sort()
        return out[:k]

    best: dict[str, tuple[float, int, int]] = {}
    order = np.lexsort((index.ids[start:stop], scores))
    for i in order:
        doc = index.doc_ids[start + i]
        if doc not in best:
            best[doc] = (float(scores[i]), int(index.ids[start + i]), int(rows[i]))
    return best


def search(index: Index, req: SearchRequest, workers: int = 1) -> list[RankedHit]:
    """Exhaustive ranked scan of the whole index.

    PS mode returns the top_k candidates overall; IR mode the top_k
    documents, each represented by its best candidate ("non-repeated
    images"). Ties break by (score, doc_id, cand_id). Empty index gives [].
    """
    if index.count == 0:
        return []
    if index.vectors is None:
        raise IndexError_("index holds no vectors; embed candidates first")
    q = np.asarray(req.query, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise IndexError_(f"query dim {q.shape[0]} != index dim {index.dim}")
    req = SearchRequest(query=q, mode=req.mode, top_k=req.top_k,
                        metric=req.metric, head=req.head)

    spans = [(s, min(s + SCAN_CHUNK, index.count))
             for s in range(0, index.count, SCAN_CHUNK)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda sp: _scan_chunk(index, sp[0], sp[1], req),
                                     spans))
    else:
        partials = [_scan_chunk(index, s, e, req) for s, e in spans]

    descending = req.metric == "learned-head"

    if req.mode == "ps":
        merged: list[tuple[float, str, int, int]] = []
        for part in partials:
            merged.extend(part)
        merged.sort()
        top = merged[:req.top_k]
    else:
        best: dict[str, tuple[float, int, int]] = {}
        for part in partials:
            for doc, key in part.items():
                if doc not in best or key < best[doc]:
                    best[doc] = key
        ranked = sorted(((key[0], doc, key[1], key[2]) for doc, key in best.items()))
        top = ranked[:req.top_k]

    hits = []
    for rank, (score_key, doc_id, _cand_id, row) in enumerate(top, start=1):
        score = -score_key if descending else score_key
        box = BoundingBox(*(int(v) for v in index.boxes[row]))
        hits.append(RankedHit(doc_id=doc_id, box=box, score=float(score), rank=rank))
    return hits
