"""Fixed-length unit-norm feature vectors for image regions.

The baseline embedder is training-free: crop, resize to a square, pool
gradient orientations into a grid of cells (8x8 cells x 9 orientation bins,
block-normalized in 2x2 cell groups), then reduce to the target dimension
and L2-normalize. Target dimensions follow the supported family
{4096, 512, 256, 128}; for targets above the stock 576-dim descriptor the
grid is densified to 16x16 cells (2304 dims) and zero-padded — a documented
expedient, not hidden.

Dimension reduction is a pure linear map: PCA directions fitted on a sample
of candidate descriptors (deterministic sign convention), or a seeded
random projection with orthonormalized rows when no sample is available.

Externally computed vectors (e.g. from a convolutional model) enter through
the ``SPOTVEC1`` exchange file and are normalized on import, which keeps the
engine's scoring path identical whichever embedder produced the vectors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import BoundingBox, DocumentImage, crop

VEC_MAGIC = b"SPOTVEC1"
ORIENT_BINS = 9
BASE_GRID = 8               # cells per side -> 576 dims
DENSE_GRID = 16             # cells per side -> 2304 dims, for large targets
SUPPORTED_DIMS = (4096, 512, 256, 128)


class EmbedError(Exception):
    pass


@dataclass
class FeatureVector:
    """Unit-norm float32 vector; `degenerate` marks zero-energy regions that
    were mapped to the canonical first basis vector."""

    values: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "baseline"            # baseline | external
    target_dim: int = 256
    reduction: str = "pca"            # pca | seeded-random-projection | none
    resize: int = 64                  # square side regions are normalized to
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("baseline", "external"):
            raise EmbedError(f"unknown embedder kind {self.kind!r}")
        if self.reduction not in ("pca", "seeded-random-projection", "none"):
            raise EmbedError(f"unknown reduction {self.reduction!r}")
        if self.target_dim < 1:
            raise EmbedError(f"target_dim must be >= 1, got {self.target_dim}")
        if self.resize < 8:
            raise EmbedError(f"resize must be >= 8, got {self.resize}")


def unit(values: np.ndarray) -> np.ndarray:
    """L2-normalize to float32; raises on zero or non-finite input."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise EmbedError("vector contains NaN or Inf")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise EmbedError("cannot normalize the zero vector")
    return (v / norm).astype(np.float32)


# ---------------------------------------------------------------------------
# Raw descriptor
# ---------------------------------------------------------------------------

def grid_for_target(target_dim: int) -> int:
    return DENSE_GRID if target_dim > BASE_GRID * BASE_GRID * ORIENT_BINS else BASE_GRID


def raw_descriptor(patch: np.ndarray, resize: int, grid: int) -> np.ndarray:
    """Gradient-orientation histogram descriptor of a grayscale patch.

    The patch is resized to `resize` x `resize` (bilinear), gradient
    magnitude is pooled into grid x grid spatial cells (bilinear cell
    weighting) x 9 unsigned orientation bins, and non-overlapping 2x2 cell
    blocks are L2-normalized. Returns float64 (grid*grid*9,); all-zero for
    constant patches.
    """
    img = Image.fromarray(np.ascontiguousarray(patch, dtype=np.float32), mode="F")
    arr = np.asarray(img.resize((resize, resize), Image.BILINEAR), dtype=np.float64)

    gy, gx = np.gradient(arr)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)          # unsigned orientations
    obin = np.minimum((theta / (np.pi / ORIENT_BINS)).astype(np.int64),
                      ORIENT_BINS - 1)

    cell = resize / grid
    hist = np.zeros((grid, grid, ORIENT_BINS), dtype=np.float64)
    rows = np.arange(resize, dtype=np.float64)
    # fractional cell coordinate of each pixel center
    f = (rows + 0.5) / cell - 0.5
    c0 = np.floor(f).astype(np.int64)
    w1 = f - c0
    c0 = np.clip(c0, -1, grid - 1)

    ridx0 = c0[:, None] * np.ones(resize, dtype=np.int64)[None, :]
    cidx0 = np.ones(resize, dtype=np.int64)[:, None] * c0[None, :]
    rw1 = np.broadcast_to(w1[:, None], (resize, resize))
    cw1 = np.broadcast_to(w1[None, :], (resize, resize))

    for dr, rweight in ((0, 1.0 - rw1), (1, rw1)):
        for dc, cweight in ((0, 1.0 - cw1), (1, cw1)):
            r = ridx0 + dr
            c = cidx0 + dc
            ok = (r >= 0) & (r < grid) & (c >= 0) & (c < grid)
            weight = (rweight * cweight * mag)[ok]
            flat = (r[ok] * grid + c[ok]) * ORIENT_BINS + obin[ok]
            np.add.at(hist.ravel(), flat, weight)

    # block normalization over non-overlapping 2x2 cell groups
    for br in range(0, grid, 2):
        for bc in range(0, grid, 2):
            block = hist[br:br + 2, bc:bc + 2, :]
            norm = np.sqrt((block ** 2).sum())
            if norm > 0:
                block /= norm
    return hist.ravel()


# ---------------------------------------------------------------------------
# Dimension reduction
# ---------------------------------------------------------------------------

@dataclass
class ReductionMap:
    """Linear map raw_dim -> target_dim, applied without recentering so that
    reduce(a*x + b*y) == a*reduce(x) + b*reduce(y) holds exactly."""

    kind: str                       # pca | seeded-random-projection | none
    raw_dim: int
    target_dim: int
    matrix: np.ndarray | None = None   # (target_dim, raw_dim) float64

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.raw_dim:
            raise EmbedError(f"descriptor dim {x.shape[0]} != raw dim {self.raw_dim}")
        if self.matrix is not None:
            return self.matrix @ x
        if self.target_dim <= self.raw_dim:
            return x[: self.target_dim]
        out = np.zeros(self.target_dim, dtype=np.float64)
        out[: self.raw_dim] = x
        return out

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Back-projection W^T W x (rows of W are orthonormal)."""
        if self.matrix is None:
            return self.apply(x) if self.target_dim >= self.raw_dim else \
                np.concatenate([x[: self.target_dim],
                                np.zeros(self.raw_dim - self.target_dim)])
        return self.matrix.T @ (self.matrix @ np.asarray(x, dtype=np.float64))

    def save(self, path: str | Path) -> None:
        matrix = self.matrix if self.matrix is not None else np.empty((0, 0))
        np.savez(path, kind=self.kind, raw_dim=self.raw_dim,
                 target_dim=self.target_dim, matrix=matrix)

    @classmethod
    def load(cls, path: str | Path) -> "ReductionMap":
        data = np.load(path, allow_pickle=False)
        matrix = data["matrix"]
        if matrix.size == 0:
            matrix = None
        return cls(kind=str(data["kind"]), raw_dim=int(data["raw_dim"]),
                   target_dim=int(data["target_dim"]), matrix=matrix)


def fit_reduction(sample: np.ndarray, target_dim: int, seed: int = 0,
                  method: str = "pca") -> ReductionMap:
    """Fit a linear reduction to `target_dim`.

    pca: top principal directions of the centered sample, needs at least
    target_dim rows; each direction's largest-magnitude coordinate is made
    positive so the fit is reproducible. seeded-random-projection: Gaussian
    rows orthonormalized by QR, no sample needed.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 2:
        raise EmbedError("sample must be a 2-D (count, raw_dim) array")
    raw_dim = sample.shape[1]
    if target_dim > raw_dim:
        raise EmbedError(f"target_dim {target_dim} exceeds raw dim {raw_dim}")

    if method == "pca":
        if sample.shape[0] < target_dim:
            raise EmbedError(f"pca needs at least {target_dim} sample vectors, "
                             f"got {sample.shape[0]}")
        centered = sample - sample.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:target_dim].copy()
        for row in components:
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                row *= -1.0
        return ReductionMap("pca", raw_dim, target_dim, components)

    if method == "seeded-random-projection":
        return random_projection(raw_dim, target_dim, seed)

    if method == "none":
        return ReductionMap("none", raw_dim, target_dim, None)

    raise EmbedError(f"unknown reduction method {method!r}")


def random_projection(raw_dim: int, target_dim: int, seed: int) -> ReductionMap:
    """Seeded Gaussian projection with orthonormal rows."""
    if target_dim > raw_dim:
        raise EmbedError(f"target_dim {target_dim} exceeds raw dim {raw_dim}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((raw_dim, target_dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))    # fix QR sign ambiguity
    return ReductionMap("seeded-random-projection", raw_dim, target_dim, q.T.copy())


# ---------------------------------------------------------------------------
# Embedder
# ---------------------------------------------------------------------------

class Embedder:
    """Deterministic region embedder: descriptor -> reduction -> unit norm."""

    def __init__(self, config: EmbedderConfig, reduction_map: ReductionMap | None = None):
        if config.kind != "baseline":
            raise EmbedError("only the baseline embedder can embed regions; "
                             "external vectors arrive via import_vectors")
        self.config = config
        self.grid = grid_for_target(config.target_dim)
        self.raw_dim = self.grid * self.grid * ORIENT_BINS
        if reduction_map is not None and reduction_map.raw_dim != self.raw_dim:
            raise EmbedError(f"reduction raw dim {reduction_map.raw_dim} does not "
                             f"match descriptor dim {self.raw_dim}")
        self.reduction_map = reduction_map
        if self.reduction_map is None and not self.needs_fit():
            self.reduction_map = self._default_reduction()

    def needs_fit(self) -> bool:
        return (self.reduction_map is None and self.config.reduction == "pca"
                and self.config.target_dim < self.raw_dim)

    def _default_reduction(self) -> ReductionMap:
        # targets at or beyond the raw descriptor reduce to pad/truncate
        if self.config.target_dim >= self.raw_dim or self.config.reduction == "none":
            return ReductionMap("none", self.raw_dim, self.config.target_dim, None)
        return random_projection(self.raw_dim, self.config.target_dim, self.config.seed)

    def fit(self, sample: np.ndarray) -> None:
        """Fit the PCA reduction on sampled raw descriptors; falls back to the
        seeded projection when the sample is too small."""
        if not self.needs_fit():
            return
        if np.asarray(sample).shape[0] >= self.config.target_dim:
            self.reduction_map = fit_reduction(sample, self.config.target_dim,
                                               self.config.seed, method="pca")
        else:
            self.reduction_map = random_projection(self.raw_dim,
                                                   self.config.target_dim,
                                                   self.config.seed)

    def raw_region_descriptor(self, image: DocumentImage, box: BoundingBox) -> np.ndarray:
        return raw_descriptor(crop(image, box).gray, self.config.resize, self.grid)

    def embed_patch(self, patch: DocumentImage) -> FeatureVector:
        if self.reduction_map is None:
            raise EmbedError("embedder not fitted; call fit() with sampled descriptors")
        desc = raw_descriptor(patch.gray, self.config.resize, self.grid)
        if not desc.any():
            # constant region: no gradient energy anywhere
            values = np.zeros(self.config.target_dim, dtype=np.float32)
            values[0] = 1.0
            return FeatureVector(values=values, degenerate=True)
        reduced = self.reduction_map.apply(desc)
        if reduced.shape[0] < self.config.target_dim:
            padded = np.zeros(self.config.target_dim, dtype=np.float64)
            padded[: reduced.shape[0]] = reduced
            reduced = padded
        if not reduced.any():
            values = np.zeros(self.config.target_dim, dtype=np.float32)
            values[0] = 1.0
            return FeatureVector(values=values, degenerate=True)
        return FeatureVector(values=unit(reduced))

    def embed_image(self, image: DocumentImage) -> FeatureVector:
        return self.embed_patch(image)

    def embed_region(self, image: DocumentImage, box: BoundingBox) -> FeatureVector:
        return self.embed_patch(crop(image, box))

    # -- persistence ---------------------------------------------------

    def save(self, prefix: str | Path) -> None:
        prefix = Path(prefix)
        meta = {"kind": self.config.kind, "target_dim": self.config.target_dim,
                "reduction": self.config.reduction, "resize": self.config.resize,
                "seed": self.config.seed}
        Path(str(prefix) + ".embedder.json").write_text(json.dumps(meta, indent=2))
        if self.reduction_map is not None:
            self.reduction_map.save(str(prefix) + ".reduction.npz")

    @classmethod
    def load(cls, prefix: str | Path) -> "Embedder":
        meta = json.loads(Path(str(prefix) + ".embedder.json").read_text())
        config = EmbedderConfig(**meta)
        red_path = Path(str(prefix) + ".reduction.npz")
        reduction = ReductionMap.load(red_path) if red_path.exists() else None
        return cls(config, reduction)


def embed_region(image: DocumentImage, box: BoundingBox,
                 cfg: EmbedderConfig) -> FeatureVector:
    """One-shot functional form; `cfg.reduction` must not require fitting."""
    emb = Embedder(cfg)
    if emb.needs_fit():
        raise EmbedError("pca reduction requires a fitted Embedder instance")
    return emb.embed_region(image, box)


# ---------------------------------------------------------------------------
# Vector exchange file
# ---------------------------------------------------------------------------

def export_vectors(path: str | Path, vectors: dict[str, FeatureVector | np.ndarray]) -> Path:
    """Write a ``SPOTVEC1`` file: u32 dim, u64 count, then per record
    u32 id-length, UTF-8 id, dim x f32."""
    if not vectors:
        raise EmbedError("nothing to export")
    arrays = {}
    dims = set()
    for key, vec in vectors.items():
        arr = vec.values if isinstance(vec, FeatureVector) else np.asarray(vec)
        arr = np.ascontiguousarray(arr, dtype=np.float32).ravel()
        arrays[key] = arr
        dims.add(arr.shape[0])
    if len(dims) != 1:
        raise EmbedError(f"mixed vector dimensions: {sorted(dims)}")
    dim = dims.pop()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(VEC_MAGIC)
        fh.write(struct.pack("<IQ", dim, len(arrays)))
        for key, arr in arrays.items():
            raw_id = key.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_id)))
            fh.write(raw_id)
            fh.write(arr.tobytes(order="C"))
    return path


def import_vectors(path: str | Path, expected_dim: int,
                   known_ids: set[str] | None = None) -> dict[str, FeatureVector]:
    """Read a ``SPOTVEC1`` file, checking dimension and id validity.

    Vectors are L2-normalized on entry; vectors already unit-norm within
    1e-6 are kept bit-identical, which makes export -> import lossless.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != VEC_MAGIC:
        raise EmbedError(f"{path} is not a vector exchange file (bad magic)")
    dim, count = struct.unpack_from("<IQ", data, 8)
    if dim != expected_dim:
        raise EmbedError(f"{path} holds dim-{dim} vectors, expected dim {expected_dim}")
    off = 8 + 12
    out: dict[str, FeatureVector] = {}
    for _ in range(count):
        if off + 4 > len(data):
            raise EmbedError(f"{path}: truncated record header after id "
                             f"{next(reversed(out)) if out else '<none>'!r}")
        (id_len,) = struct.unpack_from("<I", data, off)
        off += 4
        key = data[off:off + id_len].decode("utf-8")
        off += id_len
        end = off + dim * 4
        if end > len(data):
            raise EmbedError(f"{path}: truncated vector for id {key!r}")
        values = np.frombuffer(data[off:end], dtype="<f4").copy()
        off = end
        if not np.all(np.isfinite(values)):
            raise EmbedError(f"vector {key!r} contains NaN or Inf")
        if known_ids is not None and key not in known_ids:
            raise EmbedError(f"vector id {key!r} does not match any stored candidate")
        norm = float(np.linalg.norm(values.astype(np.float64)))
        if norm == 0.0:
            raise EmbedError(f"vector {key!r} is all zeros")
        if abs(norm - 1.0) > 1e-6:
            values = (values.astype(np.float64) / norm).astype(np.float32)
        out[key] = FeatureVector(values=values)
    return out
