"""Scoring of retrieval and spotting runs: IoU, AP, mAP, recall.

Conventions, stated once and relied on everywhere:

- IoU is computed on integer pixel areas, so it matches a pixel-counting
  oracle exactly.
- Spotting (PS) relevance is one-to-one: hits are processed in rank order
  and a hit is relevant when the already-matched hits plus this one can
  still be jointly assigned to distinct same-document occurrences with
  IoU >= threshold. The assignment is revised via augmenting paths, which
  makes the relevance vector the lexicographically best achievable — and
  therefore monotone under threshold relaxation.
- Retrieval (IR) relevance ignores location: each document with at least
  one real occurrence can satisfy one hit (the first that lands on it).
- Junk occurrences, when the protocol ignores them, absorb hits that match
  nothing real: such hits are removed from scoring entirely, neither
  rewarded nor penalized, and junk never counts toward ground-truth totals.
- AP = (1/R') * sum of precision@r over relevant ranks, with
  R' = min(R, top_k); R is the number of scorable ground-truth occurrences
  (distinct documents for IR). Queries with R = 0 are excluded and reported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import BoundingBox, GroundTruth, Occurrence, Query
from .index import RankedHit


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class EvalProtocol:
    task: str = "ps"                  # ps | ir
    top_k: int = 1000
    iou_threshold: float = 0.5
    ignore_junk: bool = False
    min_samples_per_class: int = 1

    def __post_init__(self):
        if self.task not in ("ps", "ir"):
            raise EvalError(f"task must be 'ps' or 'ir', got {self.task!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise EvalError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.top_k < 1:
            raise EvalError(f"top_k must be >= 1, got {self.top_k}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union on pixel areas; 0 for disjoint boxes."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


@dataclass
class QueryResult:
    """Relevance-marked hits for one query (already truncated to top_k).

    `hits` and `relevance` exclude junk-absorbed hits; `n_ground_truth` is
    the query's R (occurrences for PS, distinct documents for IR).
    """

    query_id: str
    hits: list[RankedHit]
    relevance: list[bool]
    n_ground_truth: int
    n_junk_removed: int = 0


def _match_ps(hits: Sequence[RankedHit], real: list[Occurrence],
              threshold: float) -> list[bool]:
    """Rank-greedy one-to-one matching with reassignment.

    Kuhn's augmenting-path step per hit: earlier hits keep their claim, but
    may be shuffled to a different admissible occurrence to make room. The
    result is the lexicographically maximal relevance vector.
    """
    edges: list[list[int]] = []
    for hit in hits:
        edges.append([j for j, occ in enumerate(real)
                      if occ.doc_id == hit.doc_id and iou(hit.box, occ.box) >= threshold])
    occ_owner: dict[int, int] = {}

    def try_assign(i: int, banned: set[int]) -> bool:
        for j in edges[i]:
            if j in banned:
                continue
            banned.add(j)
            if j not in occ_owner or try_assign(occ_owner[j], banned):
                occ_owner[j] = i
                return True
        return False

    relevant = []
    for i in range(len(hits)):
        relevant.append(try_assign(i, set()))
    return relevant


def mark_relevance(hits: Sequence[RankedHit], occurrences: Sequence[Occurrence],
                   protocol: EvalProtocol, query_id: str = "") -> QueryResult:
    """Mark each of the query's hits relevant/irrelevant under the protocol.

    `occurrences` is the ground truth for the query's category. Hits must
    already be rank-sorted; only the first protocol.top_k are scored.
    """
    hits = list(hits)[: protocol.top_k]
    if protocol.ignore_junk:
        real = [o for o in occurrences if not o.junk]
        junk = [o for o in occurrences if o.junk]
    else:
        real = list(occurrences)
        junk = []

    if protocol.task == "ps":
        relevant = _match_ps(hits, real, protocol.iou_threshold)
        n_ground_truth = len(real)

        def absorbed(hit: RankedHit) -> bool:
            return any(o.doc_id == hit.doc_id
                       and iou(hit.box, o.box) >= protocol.iou_threshold
                       for o in junk)
    else:
        real_docs = sorted({o.doc_id for o in real})
        junk_docs = {o.doc_id for o in junk} - set(real_docs)
        taken: set[str] = set()
        relevant = []
        for hit in hits:
            if hit.doc_id in real_docs and hit.doc_id not in taken:
                taken.add(hit.doc_id)
                relevant.append(True)
            else:
                relevant.append(False)
        n_ground_truth = len(real_docs)

        def absorbed(hit: RankedHit) -> bool:
            return hit.doc_id in junk_docs

    kept_hits: list[RankedHit] = []
    kept_rel: list[bool] = []
    removed = 0
    for hit, rel in zip(hits, relevant):
        if not rel and absorbed(hit):
            removed += 1
            continue
        kept_hits.append(hit)
        kept_rel.append(rel)

    return QueryResult(query_id=query_id, hits=kept_hits, relevance=kept_rel,
                       n_ground_truth=n_ground_truth, n_junk_removed=removed)


def average_precision(result: QueryResult, protocol: EvalProtocol) -> float | None:
    """AP = (1/R') sum precision@r over relevant ranks; R' = min(R, top_k).

    None when the query has no scorable ground truth (caller excludes it).
    """
    r_total = result.n_ground_truth
    if r_total == 0:
        return None
    r_prime = min(r_total, protocol.top_k)
    seen_relevant = 0
    total = 0.0
    for rank0, rel in enumerate(result.relevance):
        if rel:
            seen_relevant += 1
            total += seen_relevant / (rank0 + 1)
    return total / r_prime


@dataclass
class Report:
    task: str
    protocol: EvalProtocol
    map_score: float
    recall: float
    n_queries: int
    per_query: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "task": self.task,
            "protocol": {
                "top_k": self.protocol.top_k,
                "iou_threshold": self.protocol.iou_threshold,
                "ignore_junk": self.protocol.ignore_junk,
                "min_samples_per_class": self.protocol.min_samples_per_class,
            },
            "map": self.map_score,
            "recall": self.recall,
            "n_queries": self.n_queries,
            "per_query": self.per_query,
            "excluded": self.excluded,
        }, indent=2)

    def to_text(self) -> str:
        lines = [
            f"task={self.task}  top_k={self.protocol.top_k}  "
            f"iou>={self.protocol.iou_threshold}  queries={self.n_queries}",
            f"mAP    {self.map_score:.4f}",
            f"recall {self.recall:.4f}",
            "",
            f"{'query':<20} {'AP':>8} {'rel':>5} {'gt':>5}",
        ]
        for row in self.per_query:
            lines.append(f"{row['query_id']:<20} {row['ap']:>8.4f} "
                         f"{row['relevant_retrieved']:>5} {row['n_ground_truth']:>5}")
        for row in self.excluded:
            lines.append(f"{row['query_id']:<20} excluded: {row['reason']}")
        return "\n".join(lines)


def evaluate_run(hits_by_query: Mapping[str, Sequence[RankedHit]],
                 queries: Sequence[Query], ground_truth: GroundTruth,
                 protocol: EvalProtocol) -> Report:
    """Score a whole run: per-query AP, unweighted mAP, aggregate recall.

    Queries whose category has fewer than protocol.min_samples_per_class
    scorable ground-truth entries are excluded, as are queries with no
    ground truth at all; both appear in the report's excluded table.
    """
    per_query = []
    excluded = []
    ap_values = []
    relevant_total = 0
    gt_total = 0

    for query in sorted(queries, key=lambda q: q.query_id):
        occs = ground_truth.occurrences(query.category)
        result = mark_relevance(hits_by_query.get(query.query_id, []), occs,
                                protocol, query_id=query.query_id)
        if result.n_ground_truth == 0:
            excluded.append({"query_id": query.query_id,
                             "reason": "no scorable ground truth"})
            continue
        if result.n_ground_truth < protocol.min_samples_per_class:
            excluded.append({"query_id": query.query_id,
                             "reason": f"class has {result.n_ground_truth} sample(s), "
                                       f"needs {protocol.min_samples_per_class}"})
            continue
        ap = average_precision(result, protocol)
        n_rel = sum(result.relevance)
        ap_values.append(ap)
        relevant_total += n_rel
        gt_total += min(result.n_ground_truth, protocol.top_k)
        per_query.append({"query_id": query.query_id, "ap": ap,
                          "relevant_retrieved": n_rel,
                          "n_ground_truth": result.n_ground_truth,
                          "junk_removed": result.n_junk_removed})

    if not ap_values:
        raise EvalError("no scorable queries in the run")

    return Report(task=protocol.task, protocol=protocol,
                  map_score=sum(ap_values) / len(ap_values),
                  recall=relevant_total / gt_total if gt_total else 0.0,
                  n_queries=len(ap_values), per_query=per_query, excluded=excluded)


# ---------------------------------------------------------------------------
# Run files (JSON lines, one record per ranked hit)
# ---------------------------------------------------------------------------

def save_run(path: str | Path, hits_by_query: Mapping[str, Sequence[RankedHit]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for query_id in sorted(hits_by_query):
            for hit in hits_by_query[query_id]:
                fh.write(json.dumps({"query_id": query_id, "rank": hit.rank,
                                     "doc_id": hit.doc_id, "box": hit.box.to_list(),
                                     "score": hit.score}) + "\n")
    return path


def load_run(path: str | Path) -> dict[str, list[RankedHit]]:
    out: dict[str, list[RankedHit]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            hit = RankedHit(doc_id=raw["doc_id"], box=BoundingBox.from_list(raw["box"]),
                            score=float(raw["score"]), rank=int(raw["rank"]))
            out.setdefault(raw["query_id"], []).append(hit)
    for hits in out.values():
        hits.sort(key=lambda h: h.rank)
    return out
