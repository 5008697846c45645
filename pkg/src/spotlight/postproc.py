"""Union post-processing of retained hits.

Retrieved candidates frequently cover only part of a pattern or overlap
each other; collapsing each group of overlapping same-document hits to the
bounding box of their union improves localization before scoring. The top
`retain` hits are grouped per document into connected components of the
IoU > merge_iou overlap graph, each component becomes one hit, and the
first `emit` re-ranked hits survive.
"""

from __future__ import annotations

from dataclasses import dataclass

from .evalkit import iou
from .index import RankedHit


class PostprocError(Exception):
    pass


@dataclass(frozen=True)
class UnionConfig:
    retain: int = 2000
    emit: int = 1000
    merge_iou: float = 0.2
    score_agg: str = "best"       # best | mean

    def __post_init__(self):
        if self.emit > self.retain:
            raise PostprocError(f"emit ({self.emit}) must be <= retain ({self.retain})")
        if not 0.0 < self.merge_iou < 1.0:
            raise PostprocError(f"merge_iou must be in (0, 1), got {self.merge_iou}")
        if self.score_agg not in ("best", "mean"):
            raise PostprocError(f"score_agg must be 'best' or 'mean', got {self.score_agg!r}")


def union_merge(hits: list[RankedHit], cfg: UnionConfig,
                ascending: bool = True) -> list[RankedHit]:
    """Collapse overlapping same-document hits into their union boxes.

    `ascending` names the score convention of the input list (True for
    distances). Hits in different documents never merge. Output is re-sorted,
    re-ranked from 1, and truncated to cfg.emit.
    """
    if not hits:
        return []
    kept = hits[: cfg.retain]

    by_doc: dict[str, list[int]] = {}
    for i, hit in enumerate(kept):
        by_doc.setdefault(hit.doc_id, []).append(i)

    parent = list(range(len(kept)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for indices in by_doc.values():
        for a_pos in range(len(indices)):
            for b_pos in range(a_pos + 1, len(indices)):
                a, b = indices[a_pos], indices[b_pos]
                if iou(kept[a].box, kept[b].box) > cfg.merge_iou:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[RankedHit]] = {}
    for i, hit in enumerate(kept):
        groups.setdefault(find(i), []).append(hit)

    merged: list[RankedHit] = []
    for members in groups.values():
        box = members[0].box
        for m in members[1:]:
            box = box.union(m.box)
        scores = [m.score for m in members]
        if cfg.score_agg == "mean":
            score = sum(scores) / len(scores)
        else:
            score = min(scores) if ascending else max(scores)
        merged.append(RankedHit(doc_id=members[0].doc_id, box=box,
                                score=score, rank=0))

    sign = 1.0 if ascending else -1.0
    merged.sort(key=lambda h: (sign * h.score, h.doc_id,
                               h.box.x, h.box.y, h.box.w, h.box.h))
    return [RankedHit(doc_id=h.doc_id, box=h.box, score=h.score, rank=r)
            for r, h in enumerate(merged[: cfg.emit], start=1)]
