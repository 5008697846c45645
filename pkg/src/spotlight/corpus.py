"""Document collections: images, queries, ground truth, and the JSON manifest.

A collection lives on disk as one JSON manifest plus PNG/JPEG page images.
Pages are decoded to a grayscale plane normalized to [0, 1] (luma conversion
for color sources); the original color planes are kept alongside when the
source image has them. Collections are immutable after load and safe to share
across workers.

Manifest layout::

    {
      "name": "my-corpus",
      "images":  [{"doc_id": "p001", "path": "pages/p001.png"}, ...],
      "queries": [{"query_id": "q01", "doc_id": "p003",
                   "box": [x, y, w, h], "category": "logo-a"}, ...],
      "ground_truth": [{"category": "logo-a", "doc_id": "p004",
                        "box": [x, y, w, h], "junk": false}, ...]
    }

Image paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class CorpusError(Exception):
    """Raised for malformed manifests, undecodable images, or invalid boxes."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, top-left origin, 0-based."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise CorpusError(f"box must have w >= 1 and h >= 1, got {self}")
        if self.x < 0 or self.y < 0:
            raise CorpusError(f"box origin must be non-negative, got {self}")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits_in(self, width: int, height: int) -> bool:
        return self.right <= width and self.bottom <= height

    def offset(self, inner: "BoundingBox") -> "BoundingBox":
        """Box of `inner` expressed in this box's host coordinates.

        `crop(crop(I, A), B) == crop(I, A.offset(B))` for nested valid boxes.
        """
        return BoundingBox(self.x + inner.x, self.y + inner.y, inner.w, inner.h)

    def union(self, other: "BoundingBox") -> "BoundingBox":
        x = min(self.x, other.x)
        y = min(self.y, other.y)
        return BoundingBox(x, y, max(self.right, other.right) - x,
                           max(self.bottom, other.bottom) - y)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, raw) -> "BoundingBox":
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise CorpusError(f"box must be a [x, y, w, h] list, got {raw!r}")
        return cls(int(raw[0]), int(raw[1]), int(raw[2]), int(raw[3]))


@dataclass(frozen=True)
class DocumentImage:
    """A decoded page: grayscale plane in [0, 1], optional color planes."""

    doc_id: str
    gray: np.ndarray                      # (h, w) float32 in [0, 1]
    color: np.ndarray | None = None      # (h, w, 3) float32 in [0, 1]

    def __post_init__(self):
        if self.gray.ndim != 2 or self.gray.shape[0] < 1 or self.gray.shape[1] < 1:
            raise CorpusError(f"{self.doc_id}: image must be a non-empty 2-D grid")

    @property
    def height(self) -> int:
        return int(self.gray.shape[0])

    @property
    def width(self) -> int:
        return int(self.gray.shape[1])

    def contains(self, box: BoundingBox) -> bool:
        return box.fits_in(self.width, self.height)


@dataclass(frozen=True)
class Query:
    query_id: str
    source_doc: str
    box: BoundingBox
    category: str


@dataclass(frozen=True)
class Occurrence:
    """One ground-truth instance of a category on a page."""

    doc_id: str
    box: BoundingBox
    junk: bool = False


@dataclass
class GroundTruth:
    """Category -> occurrences, in manifest order."""

    by_category: dict[str, list[Occurrence]] = field(default_factory=dict)

    def occurrences(self, category: str) -> list[Occurrence]:
        return self.by_category.get(category, [])

    def add(self, category: str, occ: Occurrence) -> None:
        self.by_category.setdefault(category, []).append(occ)


@dataclass
class Collection:
    """An immutable-by-convention set of pages, queries, and annotations."""

    name: str
    docs: dict[str, DocumentImage]       # insertion order = sorted by doc_id
    queries: list[Query]
    ground_truth: GroundTruth

    def doc(self, doc_id: str) -> DocumentImage:
        try:
            return self.docs[doc_id]
        except KeyError:
            raise CorpusError(f"unknown document {doc_id!r}") from None

    @property
    def doc_ids(self) -> list[str]:
        return list(self.docs.keys())


def _decode_image(path: Path, doc_id: str) -> DocumentImage:
    try:
        with Image.open(path) as img:
            img.load()
            has_color = img.mode not in ("1", "L", "I", "I;16", "F")
            gray = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
            color = None
            if has_color:
                color = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise CorpusError(f"image file for {doc_id!r} not found: {path}") from None
    except Exception as exc:
        raise CorpusError(f"cannot decode image for {doc_id!r} at {path}: {exc}") from exc
    return DocumentImage(doc_id=doc_id, gray=gray, color=color)


def load_collection(manifest_path: str | Path) -> Collection:
    """Load and validate a collection from its JSON manifest.

    Documents are returned ordered by doc_id so two loads of the same
    manifest are identical. Every validation error names the offending id.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusError(f"manifest not found: {manifest_path}")
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc

    base = manifest_path.parent
    entries = raw.get("images", [])
    seen: dict[str, DocumentImage] = {}
    for entry in entries:
        doc_id = str(entry.get("doc_id", ""))
        if not doc_id:
            raise CorpusError(f"image entry missing doc_id: {entry!r}")
        if doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc_id!r} in manifest")
        seen[doc_id] = _decode_image(base / entry["path"], doc_id)
    docs = {doc_id: seen[doc_id] for doc_id in sorted(seen)}

    queries: list[Query] = []
    for entry in raw.get("queries", []):
        query_id = str(entry.get("query_id", ""))
        doc_id = str(entry.get("doc_id", ""))
        if doc_id not in docs:
            raise CorpusError(f"query {query_id!r} references unknown document {doc_id!r}")
        box = BoundingBox.from_list(entry["box"])
        if not docs[doc_id].contains(box):
            raise CorpusError(f"query {query_id!r} box {box.to_list()} exceeds "
                              f"document {doc_id!r} bounds")
        category = str(entry.get("category", ""))
        if not category:
            raise CorpusError(f"query {query_id!r} has an empty category")
        queries.append(Query(query_id, doc_id, box, category))

    gt = GroundTruth()
    for entry in raw.get("ground_truth", []):
        category = str(entry.get("category", ""))
        doc_id = str(entry.get("doc_id", ""))
        if doc_id not in docs:
            raise CorpusError(f"ground truth for {category!r} references unknown "
                              f"document {doc_id!r}")
        box = BoundingBox.from_list(entry["box"])
        if not docs[doc_id].contains(box):
            raise CorpusError(f"ground truth for {category!r} box {box.to_list()} "
                              f"exceeds document {doc_id!r} bounds")
        gt.add(category, Occurrence(doc_id, box, bool(entry.get("junk", False))))

    return Collection(name=str(raw.get("name", manifest_path.stem)),
                      docs=docs, queries=queries, ground_truth=gt)


def save_collection(collection: Collection, out_dir: str | Path,
                    manifest_name: str = "manifest.json") -> Path:
    """Write a collection to `out_dir` as manifest + PNG pages.

    Intensities are quantized to 8-bit on save; collections whose planes are
    already multiples of 1/255 round-trip exactly.
    """
    out_dir = Path(out_dir)
    pages = out_dir / "pages"
    pages.mkdir(parents=True, exist_ok=True)
    images = []
    for doc_id in sorted(collection.docs):
        doc = collection.docs[doc_id]
        rel = f"pages/{doc_id}.png"
        if doc.color is not None:
            arr = np.clip(np.rint(doc.color * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(out_dir / rel)
        else:
            arr = np.clip(np.rint(doc.gray * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="L").save(out_dir / rel)
        images.append({"doc_id": doc_id, "path": rel})

    gt_entries = []
    for category, occs in collection.ground_truth.by_category.items():
        for occ in occs:
            entry = {"category": category, "doc_id": occ.doc_id, "box": occ.box.to_list()}
            if occ.junk:
                entry["junk"] = True
            gt_entries.append(entry)

    manifest = {
        "name": collection.name,
        "images": images,
        "queries": [{"query_id": q.query_id, "doc_id": q.source_doc,
                     "box": q.box.to_list(), "category": q.category}
                    for q in collection.queries],
        "ground_truth": gt_entries,
    }
    path = out_dir / manifest_name
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def crop(image: DocumentImage, box: BoundingBox) -> DocumentImage:
    """Cut `box` out of `image`; pixel (i, j) of the result is source (x+j, y+i)."""
    if not image.contains(box):
        raise CorpusError(f"crop box {box.to_list()} exceeds bounds of "
                          f"{image.doc_id!r} ({image.width}x{image.height})")
    gray = image.gray[box.y:box.bottom, box.x:box.right].copy()
    color = None
    if image.color is not None:
        color = image.color[box.y:box.bottom, box.x:box.right].copy()
    crop_id = f"{image.doc_id}[{box.x},{box.y},{box.w},{box.h}]"
    return DocumentImage(doc_id=crop_id, gray=gray, color=color)
