"""Candidate-region generation for document pages.

Pipeline per page: adaptive-threshold binarization isolates ink from paper,
a graph-based segmentation splits the masked page into coherent segments,
and a greedy hierarchical grouping pass (selective-search style) emits the
bounding box of every segment and every merged region, across one or more
segmentation scales and color spaces.

Segmentation runs on the thresholded page (background forced to blank
paper), while the color/texture histograms that drive grouping are computed
on the original intensity planes. Everything here is deterministic: edge
ties break by lexicographic pixel order and merge ties by smallest segment
id pair, so identical inputs give byte-identical candidate lists.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy.ndimage import gaussian_filter

from .corpus import BoundingBox, DocumentImage
from .index import CandidateRegion

COMPONENTS = ("color", "texture", "size", "fill")

COLOR_BINS = 25            # per channel, over [0, 1]
TEXTURE_ORIENTATIONS = 8
TEXTURE_MAG_BINS = 10
TEXTURE_SIGMA = 1.0        # Gaussian-derivative scale


class ProposalError(Exception):
    pass


@dataclass(frozen=True)
class SelectiveSearchConfig:
    """Knobs for the proposal pipeline.

    `block`/`offset` drive the adaptive threshold, `k_values` the
    segmentation scales (8-bit convention: a k of 50 corresponds to an
    intensity budget of 50/255). Grouping unions runs over every
    (color_space, k) combination.
    """

    block: int = 241
    offset: float = 0.12
    k_values: tuple[float, ...] = (50.0, 100.0)
    similarity_components: tuple[str, ...] = ("color", "texture", "fill", "size")
    min_box: int = 8
    max_candidates_per_doc: int = 10_000
    color_spaces: tuple[str, ...] = ("gray",)
    use_threshold: bool = True

    def __post_init__(self):
        if self.block < 3 or self.block % 2 == 0:
            raise ProposalError(f"block must be odd and >= 3, got {self.block}")
        if not 0.0 <= self.offset < 1.0:
            raise ProposalError(f"offset must be in [0, 1), got {self.offset}")
        if not self.k_values or any(k <= 0 for k in self.k_values):
            raise ProposalError("k_values must be non-empty and positive")
        if not self.similarity_components:
            raise ProposalError("at least one similarity component is required")
        unknown = set(self.similarity_components) - set(COMPONENTS)
        if unknown:
            raise ProposalError(f"unknown similarity components: {sorted(unknown)}")
        unknown_spaces = set(self.color_spaces) - {"gray", "rgb", "nrgb"}
        if unknown_spaces:
            raise ProposalError(f"unknown color spaces: {sorted(unknown_spaces)}")


def tobacco_config(**overrides) -> SelectiveSearchConfig:
    """Settings used for scanned office documents (block 241, offset 0.12)."""
    return replace(SelectiveSearchConfig(), **overrides)


def docexplore_config(**overrides) -> SelectiveSearchConfig:
    """Settings used for medieval manuscript pages: finer threshold window,
    three scales, RGB + normalized-RGB color spaces."""
    cfg = SelectiveSearchConfig(block=209, offset=0.14, k_values=(50.0, 100.0, 150.0),
                                color_spaces=("rgb", "nrgb"))
    return replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# Adaptive threshold
# ---------------------------------------------------------------------------

def adaptive_threshold(image: DocumentImage, block: int, offset: float) -> np.ndarray:
    """Binarize against the local mean: mask = intensity < mean(window) - offset.

    The window is `block` x `block` with coordinates clamped to the image
    (edge replication), so border pixels reuse their nearest neighbors.
    A block larger than the image is reduced to the largest odd size that
    fits. Returns a boolean (h, w) mask; True marks foreground (ink).
    """
    if block % 2 == 0 or block < 3:
        raise ProposalError(f"block must be odd and >= 3, got {block}")
    gray = image.gray
    h, w = gray.shape
    eff = min(block, min(h, w))
    if eff % 2 == 0:
        eff -= 1
    if eff < 1:
        eff = 1
    r = eff // 2
    padded = np.pad(gray.astype(np.float64), r, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    window = (integral[eff:, eff:] - integral[:-eff, eff:]
              - integral[eff:, :-eff] + integral[:-eff, :-eff])
    mean = window / float(eff * eff)
    return gray < (mean - offset)


# ---------------------------------------------------------------------------
# Graph segmentation
# ---------------------------------------------------------------------------

@dataclass
class SegmentLabelMap:
    """Per-pixel segment labels plus the planes used for segment histograms."""

    labels: np.ndarray            # (h, w) int32, labels 0..n_segments-1
    n_segments: int
    features: np.ndarray          # (h, w, c) float32 in [0, 1]

    def with_features(self, planes: np.ndarray) -> "SegmentLabelMap":
        if planes.shape[:2] != self.labels.shape:
            raise ProposalError("feature planes must match label map shape")
        return SegmentLabelMap(self.labels, self.n_segments, planes)


def segment_graph(image: DocumentImage, k: float) -> SegmentLabelMap:
    """Graph-based segmentation of the grayscale plane at scale `k`.

    4-connected grid; edge weight is the absolute intensity difference.
    Edges are processed in (weight, pixel, neighbor) lexicographic order and
    two components merge when the joining weight does not exceed either
    component's internal-difference budget (max internal edge + k'/size,
    with k' = k/255 matching the [0, 1] intensity scale). Labels are
    assigned by row-major first appearance, so output is deterministic.
    """
    gray = image.gray.astype(np.float64)
    h, w = gray.shape
    n = h * w
    k_eff = float(k) / 255.0
    if k_eff <= 0:
        raise ProposalError(f"k must be positive, got {k}")

    idx = np.arange(n, dtype=np.int64).reshape(h, w)
    u_parts = []
    v_parts = []
    wt_parts = []
    if w > 1:
        u_parts.append(idx[:, :-1].ravel())
        v_parts.append(idx[:, 1:].ravel())
        wt_parts.append(np.abs(gray[:, :-1] - gray[:, 1:]).ravel())
    if h > 1:
        u_parts.append(idx[:-1, :].ravel())
        v_parts.append(idx[1:, :].ravel())
        wt_parts.append(np.abs(gray[:-1, :] - gray[1:, :]).ravel())

    if u_parts:
        u = np.concatenate(u_parts)
        v = np.concatenate(v_parts)
        wts = np.concatenate(wt_parts)
        order = np.lexsort((v, u, wts))
        u = u[order].tolist()
        v = v[order].tolist()
        wts = wts[order].tolist()
    else:
        u, v, wts = [], [], []

    parent = list(range(n))
    size = [1] * n
    thresh = [k_eff] * n

    for i in range(len(wts)):
        wt = wts[i]
        a = u[i]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = v[i]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a == b:
            continue
        if wt <= thresh[a] and wt <= thresh[b]:
            if size[a] < size[b]:
                a, b = b, a
            parent[b] = a
            size[a] += size[b]
            thresh[a] = wt + k_eff / size[a]

    roots = np.empty(n, dtype=np.int64)
    for p in range(n):
        a = p
        while parent[a] != a:
            a = parent[a]
        roots[p] = a

    labels = np.empty(n, dtype=np.int32)
    remap: dict[int, int] = {}
    next_label = 0
    for p in range(n):
        root = int(roots[p])
        lab = remap.get(root)
        if lab is None:
            lab = next_label
            remap[root] = lab
            next_label += 1
        labels[p] = lab

    planes = image.gray.astype(np.float32)[..., None]
    return SegmentLabelMap(labels.reshape(h, w), next_label, planes)


# ---------------------------------------------------------------------------
# Segment features
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    segment_id: int
    size: int
    color_hist: np.ndarray        # L1-normalized, COLOR_BINS per channel
    texture_hist: np.ndarray      # L1-normalized, 8x10 per channel
    box: BoundingBox


def _texture_bins(plane: np.ndarray) -> np.ndarray:
    """Joint (orientation, magnitude) bin index per pixel for one channel."""
    gx = gaussian_filter(plane, TEXTURE_SIGMA, order=(0, 1), mode="nearest")
    gy = gaussian_filter(plane, TEXTURE_SIGMA, order=(1, 0), mode="nearest")
    theta = np.arctan2(gy, gx)  # [-pi, pi]
    obin = np.floor((theta + np.pi) / (2.0 * np.pi / TEXTURE_ORIENTATIONS)).astype(np.int64)
    obin = np.clip(obin, 0, TEXTURE_ORIENTATIONS - 1)
    mag = np.clip(np.hypot(gx, gy), 0.0, 1.0)
    mbin = np.minimum((mag * TEXTURE_MAG_BINS).astype(np.int64), TEXTURE_MAG_BINS - 1)
    return obin * TEXTURE_MAG_BINS + mbin


def build_segments(label_map: SegmentLabelMap) -> list[Segment]:
    """Size, tight box, and normalized color/texture histograms per segment."""
    labels = label_map.labels
    n = label_map.n_segments
    h, w = labels.shape
    flat = labels.ravel().astype(np.int64)
    planes = label_map.features
    channels = planes.shape[2]

    sizes = np.bincount(flat, minlength=n)

    color_counts = np.empty((n, channels * COLOR_BINS), dtype=np.float64)
    tex_bins_per_ch = TEXTURE_ORIENTATIONS * TEXTURE_MAG_BINS
    texture_counts = np.empty((n, channels * tex_bins_per_ch), dtype=np.float64)
    for c in range(channels):
        plane = planes[:, :, c].astype(np.float64)
        cbin = np.minimum((plane * COLOR_BINS).astype(np.int64), COLOR_BINS - 1).ravel()
        counts = np.bincount(flat * COLOR_BINS + cbin, minlength=n * COLOR_BINS)
        color_counts[:, c * COLOR_BINS:(c + 1) * COLOR_BINS] = counts.reshape(n, COLOR_BINS)
        tbin = _texture_bins(plane).ravel()
        counts = np.bincount(flat * tex_bins_per_ch + tbin, minlength=n * tex_bins_per_ch)
        texture_counts[:, c * tex_bins_per_ch:(c + 1) * tex_bins_per_ch] = \
            counts.reshape(n, tex_bins_per_ch)

    totals = (sizes * channels).astype(np.float64)[:, None]
    color_hists = color_counts / totals
    texture_hists = texture_counts / totals

    rows = np.repeat(np.arange(h, dtype=np.int64), w)
    cols = np.tile(np.arange(w, dtype=np.int64), h)
    min_row = np.full(n, h, dtype=np.int64)
    max_row = np.full(n, -1, dtype=np.int64)
    min_col = np.full(n, w, dtype=np.int64)
    max_col = np.full(n, -1, dtype=np.int64)
    np.minimum.at(min_row, flat, rows)
    np.maximum.at(max_row, flat, rows)
    np.minimum.at(min_col, flat, cols)
    np.maximum.at(max_col, flat, cols)

    segments = []
    for i in range(n):
        box = BoundingBox(int(min_col[i]), int(min_row[i]),
                          int(max_col[i] - min_col[i] + 1),
                          int(max_row[i] - min_row[i] + 1))
        segments.append(Segment(i, int(sizes[i]), color_hists[i], texture_hists[i], box))
    return segments


def pairwise_similarity(a: Segment, b: Segment, cfg: SelectiveSearchConfig,
                        image_size: int) -> float:
    """Sum of the enabled similarity components, each clamped to [0, 1].

    color/texture: histogram intersection; size: favors merging small
    segments early; fill: favors merges whose union box has few holes.
    """
    if a.color_hist.shape != b.color_hist.shape:
        raise ProposalError("color histogram dimensions differ")
    if a.texture_hist.shape != b.texture_hist.shape:
        raise ProposalError("texture histogram dimensions differ")
    score = 0.0
    comps = cfg.similarity_components
    if "color" in comps:
        score += float(np.clip(np.minimum(a.color_hist, b.color_hist).sum(), 0.0, 1.0))
    if "texture" in comps:
        score += float(np.clip(np.minimum(a.texture_hist, b.texture_hist).sum(), 0.0, 1.0))
    if "size" in comps:
        score += float(np.clip(1.0 - (a.size + b.size) / image_size, 0.0, 1.0))
    if "fill" in comps:
        union_box = a.box.union(b.box)
        hole = union_box.area - a.size - b.size
        score += float(np.clip(1.0 - hole / image_size, 0.0, 1.0))
    return score


# ---------------------------------------------------------------------------
# Hierarchical grouping
# ---------------------------------------------------------------------------

@dataclass
class MergeEvent:
    a: int
    b: int
    merged: Segment


def segment_adjacency(labels: np.ndarray) -> set[tuple[int, int]]:
    """Unordered pairs of segment ids that share a 4-neighbor pixel edge."""
    pairs: set[tuple[int, int]] = set()
    for la, lb in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = la != lb
        a = la[diff].astype(np.int64)
        b = lb[diff].astype(np.int64)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def greedy_merge(segments: list[Segment], adjacency: Iterable[tuple[int, int]],
                 cfg: SelectiveSearchConfig, image_size: int) -> list[MergeEvent]:
    """Repeatedly merge the most-similar adjacent pair until one region remains.

    Merged histograms are size-weighted averages (which keeps them
    L1-normalized), the merged box is the union of the member boxes, and the
    merged segment gets the next fresh id. Ties in similarity resolve to the
    smallest (id_a, id_b) pair. Returns the merge events in order; for n
    initial segments in one connected adjacency graph there are n-1 events.
    """
    segs: dict[int, Segment] = {s.segment_id: s for s in segments}
    neighbors: dict[int, set[int]] = {sid: set() for sid in segs}
    heap: list[tuple[float, int, int]] = []
    for a, b in sorted(adjacency):
        neighbors[a].add(b)
        neighbors[b].add(a)
        sim = pairwise_similarity(segs[a], segs[b], cfg, image_size)
        heap.append((-sim, a, b))
    heapq.heapify(heap)

    next_id = max(segs) + 1 if segs else 0
    events: list[MergeEvent] = []
    alive = {sid: True for sid in segs}

    while heap:
        neg_sim, a, b = heapq.heappop(heap)
        if not (alive.get(a) and alive.get(b)):
            continue
        sa, sb = segs[a], segs[b]
        total = sa.size + sb.size
        merged = Segment(
            segment_id=next_id,
            size=total,
            color_hist=(sa.size * sa.color_hist + sb.size * sb.color_hist) / total,
            texture_hist=(sa.size * sa.texture_hist + sb.size * sb.texture_hist) / total,
            box=sa.box.union(sb.box),
        )
        alive[a] = alive[b] = False
        merged_neighbors = {n for n in (neighbors[a] | neighbors[b])
                            if n not in (a, b) and alive.get(n)}
        segs[next_id] = merged
        alive[next_id] = True
        neighbors[next_id] = merged_neighbors
        for n in merged_neighbors:
            neighbors[n].add(next_id)
            sim = pairwise_similarity(merged, segs[n], cfg, image_size)
            heapq.heappush(heap, (-sim, min(next_id, n), max(next_id, n)))
        events.append(MergeEvent(a, b, merged))
        next_id += 1

    return events


def hierarchical_group(label_map: SegmentLabelMap,
                       cfg: SelectiveSearchConfig) -> list[BoundingBox]:
    """Boxes of all initial segments and all merged regions, deduplicated.

    Emission order is initial segments by id, then merge events in order;
    duplicates keep their first occurrence, boxes with either side below
    cfg.min_box are dropped, and the list is capped at
    cfg.max_candidates_per_doc.
    """
    segments = build_segments(label_map)
    image_size = label_map.labels.size
    adjacency = segment_adjacency(label_map.labels)
    events = greedy_merge(segments, adjacency, cfg, image_size)

    boxes: list[BoundingBox] = []
    seen: set[tuple[int, int, int, int]] = set()
    for seg in segments:
        key = (seg.box.x, seg.box.y, seg.box.w, seg.box.h)
        if key not in seen:
            seen.add(key)
            boxes.append(seg.box)
    for ev in events:
        key = (ev.merged.box.x, ev.merged.box.y, ev.merged.box.w, ev.merged.box.h)
        if key not in seen:
            seen.add(key)
            boxes.append(ev.merged.box)

    boxes = [b for b in boxes if b.w >= cfg.min_box and b.h >= cfg.min_box]
    return boxes[:cfg.max_candidates_per_doc]


# ---------------------------------------------------------------------------
# Full proposal pass
# ---------------------------------------------------------------------------

def _feature_planes(image: DocumentImage, space: str) -> np.ndarray:
    if space == "gray":
        return image.gray[..., None]
    rgb = image.color
    if rgb is None:
        rgb = np.repeat(image.gray[..., None], 3, axis=2)
    if space == "rgb":
        return rgb
    if space == "nrgb":
        total = rgb.sum(axis=2, keepdims=True)
        total = np.where(total > 0, total, 1.0)
        return (rgb / total).astype(np.float32)
    raise ProposalError(f"unknown color space {space!r}")


def masked_page(image: DocumentImage, cfg: SelectiveSearchConfig) -> DocumentImage:
    """Page with everything outside the adaptive-threshold mask set to blank
    paper (intensity 1.0), so segmentation follows the ink structure."""
    if not cfg.use_threshold:
        return image
    mask = adaptive_threshold(image, cfg.block, cfg.offset)
    gray = np.where(mask, image.gray, np.float32(1.0)).astype(np.float32)
    return DocumentImage(doc_id=f"{image.doc_id}#masked", gray=gray)


def propose(image: DocumentImage, cfg: SelectiveSearchConfig,
            base_id: int = 0) -> list[CandidateRegion]:
    """All candidate boxes for one page: the union over every configured
    (color_space, k) grouping run, deduplicated by exact box equality."""
    source = masked_page(image, cfg)
    boxes: list[BoundingBox] = []
    seen: set[tuple[int, int, int, int]] = set()
    for space in cfg.color_spaces:
        planes = _feature_planes(image, space)
        for k in cfg.k_values:
            label_map = segment_graph(source, k).with_features(planes)
            for box in hierarchical_group(label_map, cfg):
                key = (box.x, box.y, box.w, box.h)
                if key not in seen:
                    seen.add(key)
                    boxes.append(box)
    return [CandidateRegion(cand_id=base_id + i, doc_id=image.doc_id, box=box)
            for i, box in enumerate(boxes)]
