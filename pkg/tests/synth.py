"""Synthetic document corpora for tests.

Pages are uniform light paper with dark glyphs drawn from a small family of
4-connected axis-aligned shapes, so region proposals have clean targets and
exact-copy occurrences embed identically. All intensities are multiples of
1/255, which makes save -> load round trips lossless.
"""

from __future__ import annotations

import numpy as np

from spotlight.corpus import (BoundingBox, Collection, DocumentImage, GroundTruth,
                              Occurrence, Query)

PAPER = 219          # background gray level (8-bit)


def _blank(height: int, width: int) -> np.ndarray:
    return np.full((height, width), PAPER, dtype=np.uint8)


def _rect(canvas: np.ndarray, x: int, y: int, w: int, h: int, level: int) -> None:
    canvas[y:y + h, x:x + w] = level


def glyph_frame(side: int, level: int) -> np.ndarray:
    g = np.full((side, side), PAPER, dtype=np.uint8)
    t = max(3, side // 6)
    _rect(g, 0, 0, side, t, level)
    _rect(g, 0, side - t, side, t, level)
    _rect(g, 0, 0, t, side, level)
    _rect(g, side - t, 0, t, side, level)
    return g


def glyph_plus(side: int, level: int) -> np.ndarray:
    g = np.full((side, side), PAPER, dtype=np.uint8)
    t = max(3, side // 4)
    mid = (side - t) // 2
    _rect(g, mid, 0, t, side, level)
    _rect(g, 0, mid, side, t, level)
    return g


def glyph_tee(side: int, level: int) -> np.ndarray:
    g = np.full((side, side), PAPER, dtype=np.uint8)
    t = max(3, side // 4)
    _rect(g, 0, 0, side, t, level)
    _rect(g, (side - t) // 2, 0, t, side, level)
    return g


def glyph_ell(side: int, level: int) -> np.ndarray:
    g = np.full((side, side), PAPER, dtype=np.uint8)
    t = max(3, side // 4)
    _rect(g, 0, 0, t, side, level)
    _rect(g, 0, side - t, side, t, level)
    return g


def glyph_aitch(side: int, level: int) -> np.ndarray:
    g = np.full((side, side), PAPER, dtype=np.uint8)
    t = max(3, side // 5)
    _rect(g, 0, 0, t, side, level)
    _rect(g, side - t, 0, t, side, level)
    _rect(g, 0, (side - t) // 2, side, t, level)
    return g


GLYPHS = {
    "frame": glyph_frame,
    "plus": glyph_plus,
    "tee": glyph_tee,
    "ell": glyph_ell,
    "aitch": glyph_aitch,
}


def _place(rng: np.random.Generator, occupied: list[tuple[int, int, int, int]],
           page_h: int, page_w: int, side: int, margin: int = 14,
           tries: int = 200) -> tuple[int, int] | None:
    for _ in range(tries):
        x = int(rng.integers(margin, page_w - side - margin))
        y = int(rng.integers(margin, page_h - side - margin))
        clear = all(x + side + margin <= ox or ox + ow + margin <= x
                    or y + side + margin <= oy or oy + oh + margin <= y
                    for ox, oy, ow, oh in occupied)
        if clear:
            occupied.append((x, y, side, side))
            return x, y
    return None


def _to_doc(doc_id: str, canvas: np.ndarray) -> DocumentImage:
    return DocumentImage(doc_id=doc_id, gray=canvas.astype(np.float32) / 255.0)


def proposal_corpus(seed: int = 11, pages: int = 10, glyphs_per_page: int = 3,
                    page_side: int = 360) -> tuple[Collection, list[tuple[str, BoundingBox]]]:
    """Pages with planted high-contrast glyphs; returns (collection, planted)."""
    rng = np.random.default_rng(seed)
    names = list(GLYPHS)
    docs = {}
    planted: list[tuple[str, BoundingBox]] = []
    for p in range(pages):
        doc_id = f"page{p:03d}"
        canvas = _blank(page_side, page_side)
        occupied: list[tuple[int, int, int, int]] = []
        for g in range(glyphs_per_page):
            side = int(rng.integers(24, 49))
            level = int(rng.integers(10, 80))
            name = names[(p * glyphs_per_page + g) % len(names)]
            pos = _place(rng, occupied, page_side, page_side, side)
            if pos is None:
                continue
            x, y = pos
            tile = GLYPHS[name](side, level)
            ink = tile != PAPER
            canvas[y:y + side, x:x + side][ink] = tile[ink]
            planted.append((doc_id, BoundingBox(x, y, side, side)))
        docs[doc_id] = _to_doc(doc_id, canvas)
    collection = Collection(name="proposal-synth", docs=docs, queries=[],
                            ground_truth=GroundTruth())
    return collection, planted


def retrieval_corpus(seed: int = 23, pages: int = 20, categories: int = 5,
                     copies: int = 6, page_side: int = 360,
                     glyph_side: int = 32) -> Collection:
    """Exact-copy corpus: `categories` glyphs, each planted `copies` times on
    distinct pages, one query per category, full ground truth, plus a few
    distractor rectangles."""
    rng = np.random.default_rng(seed)
    names = list(GLYPHS)[:categories]
    levels = [16, 32, 48, 64, 80][:categories]
    tiles = {name: GLYPHS[name](glyph_side, levels[i])
             for i, name in enumerate(names)}

    canvases = {f"page{p:03d}": _blank(page_side, page_side) for p in range(pages)}
    occupied = {doc_id: [] for doc_id in canvases}
    gt = GroundTruth()
    queries: list[Query] = []

    for name in names:
        chosen = rng.choice(pages, size=copies, replace=False)
        first = True
        for p in sorted(int(c) for c in chosen):
            doc_id = f"page{p:03d}"
            pos = _place(rng, occupied[doc_id], page_side, page_side, glyph_side)
            if pos is None:
                raise RuntimeError("could not place glyph; lower density")
            x, y = pos
            tile = tiles[name]
            ink = tile != PAPER
            canvases[doc_id][y:y + glyph_side, x:x + glyph_side][ink] = tile[ink]
            box = BoundingBox(x, y, glyph_side, glyph_side)
            gt.add(name, Occurrence(doc_id=doc_id, box=box))
            if first:
                queries.append(Query(query_id=f"q-{name}", source_doc=doc_id,
                                     box=box, category=name))
                first = False

    # distractor rectangles, clearly different from any glyph
    for doc_id, canvas in canvases.items():
        for _ in range(2):
            side = int(rng.integers(18, 40))
            pos = _place(rng, occupied[doc_id], page_side, page_side, side)
            if pos is not None:
                x, y = pos
                _rect(canvas, x, y, side, max(6, side // 3), 115)

    docs = {doc_id: _to_doc(doc_id, canvases[doc_id]) for doc_id in sorted(canvases)}
    return Collection(name="retrieval-synth", docs=docs, queries=queries,
                      ground_truth=gt)


def random_collection(seed: int = 5, pages: int = 4, page_side: int = 96) -> Collection:
    """Small random-content corpus for IO round-trip tests."""
    rng = np.random.default_rng(seed)
    docs = {}
    for p in range(pages):
        doc_id = f"rnd{p:02d}"
        canvas = rng.integers(0, 256, size=(page_side, page_side), dtype=np.uint8)
        docs[doc_id] = _to_doc(doc_id, canvas)
    gt = GroundTruth()
    gt.add("blob", Occurrence("rnd00", BoundingBox(4, 4, 20, 16)))
    gt.add("blob", Occurrence("rnd01", BoundingBox(30, 40, 18, 18), junk=True))
    queries = [Query("q0", "rnd00", BoundingBox(4, 4, 20, 16), "blob")]
    return Collection(name="random-synth", docs=dict(sorted(docs.items())),
                      queries=queries, ground_truth=gt)
