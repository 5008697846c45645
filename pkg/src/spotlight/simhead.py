"""Similarity scoring between query and candidate vectors.

Fixed metrics (cosine and Euclidean distance) plus a small learned head: a
scalar affine map on the pair distance followed by a sigmoid, trained with
stochastic gradient descent on sigmoid cross-entropy over labeled
similar/dissimilar pairs. With a negative distance weight the head's output
probability is strictly decreasing in distance, so ranking by head score
equals ranking by raw distance — learned and fixed scoring are
rank-equivalent, which the tests assert as a set equality, never as score
equality.

On unit vectors the two fixed metrics are tied by euclidean^2 = 2 * cosine,
used as a cross-metric consistency check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LABEL_SIMILAR = "similar"
LABEL_DISSIMILAR = "dissimilar"


class SimilarityError(Exception):
    pass


def _as_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    av = np.asarray(a.values if hasattr(a, "values") else a, dtype=np.float64).ravel()
    bv = np.asarray(b.values if hasattr(b, "values") else b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise SimilarityError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    return av, bv


def cosine_distance(a, b) -> float:
    """1 - <a, b> for unit-norm inputs; in [0, 2]."""
    av, bv = _as_pair(a, b)
    return float(1.0 - np.dot(av, bv))


def euclidean_distance(a, b) -> float:
    av, bv = _as_pair(a, b)
    return float(np.linalg.norm(av - bv))


DISTANCES = {"cosine": cosine_distance, "euclidean": euclidean_distance}


@dataclass
class SimilarityHead:
    """score(d) = sigmoid(w*d + b); trained heads have w < 0 so that larger
    distances mean lower similarity."""

    w: float
    b: float
    dim: int = 0
    trained_on: dict = field(default_factory=dict)

    def score(self, d):
        z = self.w * np.asarray(d, dtype=np.float64) + self.b
        out = 1.0 / (1.0 + np.exp(-z))
        if np.ndim(d) == 0:
            return float(out)
        return out

    def save(self, path: str | Path) -> None:
        payload = {"w": self.w, "b": self.b, "dim": self.dim,
                   "trained_on": self.trained_on}
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "SimilarityHead":
        raw = json.loads(Path(path).read_text())
        return cls(w=float(raw["w"]), b=float(raw["b"]), dim=int(raw.get("dim", 0)),
                   trained_on=raw.get("trained_on", {}))

    @property
    def base_metric(self) -> str:
        return self.trained_on.get("metric", "euclidean")


@dataclass
class PairSet:
    """Labeled vector pairs; labels are 'similar' / 'dissimilar'."""

    pairs: list[tuple[np.ndarray, np.ndarray, str]]

    def __len__(self) -> int:
        return len(self.pairs)

    def labels(self) -> np.ndarray:
        return np.array([1.0 if lab == LABEL_SIMILAR else 0.0
                         for _, _, lab in self.pairs])

    def distances(self, distance_fn) -> np.ndarray:
        return np.array([distance_fn(a, b) for a, b, _ in self.pairs])

    def validate(self) -> None:
        if not self.pairs:
            raise SimilarityError("empty pair set")
        dims = {a.shape[0] for a, _, _ in self.pairs} | \
               {b.shape[0] for _, b, _ in self.pairs}
        if len(dims) != 1:
            raise SimilarityError(f"pair set mixes dimensions: {sorted(dims)}")
        labels = {lab for _, _, lab in self.pairs}
        bad = labels - {LABEL_SIMILAR, LABEL_DISSIMILAR}
        if bad:
            raise SimilarityError(f"unknown labels: {sorted(bad)}")
        if len(labels) != 2:
            raise SimilarityError("training needs both similar and dissimilar pairs")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for a, b, lab in self.pairs:
                fh.write(json.dumps({"a": [float(x) for x in a],
                                     "b": [float(x) for x in b],
                                     "label": lab}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PairSet":
        pairs = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                pairs.append((np.asarray(raw["a"], dtype=np.float64),
                              np.asarray(raw["b"], dtype=np.float64),
                              str(raw["label"])))
        return cls(pairs)


def make_pair_set(items: list[tuple[np.ndarray, str]], seed: int = 0,
                  negative_ratio: float = 1.5,
                  train_fraction: float = 0.7) -> tuple[PairSet, PairSet]:
    """Build labeled pairs from (vector, category) items.

    All same-category pairs become positives; negatives are sampled across
    categories at `negative_ratio` times the positive count (1.5x by
    default). The combined set is shuffled and split train/test (70/30).
    """
    rng = np.random.default_rng(seed)
    n = len(items)
    positives = []
    negative_pool = []
    for i in range(n):
        for j in range(i + 1, n):
            if items[i][1] == items[j][1]:
                positives.append((items[i][0], items[j][0], LABEL_SIMILAR))
            else:
                negative_pool.append((items[i][0], items[j][0], LABEL_DISSIMILAR))
    if not positives or not negative_pool:
        raise SimilarityError("need both same-category and cross-category items")
    want_neg = min(len(negative_pool), int(round(negative_ratio * len(positives))))
    chosen = rng.choice(len(negative_pool), size=want_neg, replace=False)
    pairs = positives + [negative_pool[i] for i in chosen]
    order = rng.permutation(len(pairs))
    pairs = [pairs[i] for i in order]
    cut = int(round(train_fraction * len(pairs)))
    return PairSet(pairs[:cut]), PairSet(pairs[cut:])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def loss_and_grad(w: float, b: float, distances: np.ndarray,
                  labels: np.ndarray) -> tuple[float, float, float]:
    """Mean sigmoid cross-entropy and its gradient in (w, b).

    Uses log(1 + e^z) - y*z for numerical stability.
    """
    z = w * distances + b
    loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    p = 1.0 / (1.0 + np.exp(-z))
    residual = p - labels
    return loss, float(np.mean(residual * distances)), float(np.mean(residual))


def head_score(head: SimilarityHead, d: float) -> float:
    """Similarity probability for one distance; monotone decreasing when w < 0."""
    return head.score(d)


def train_head(pairs: PairSet, distance_fn=euclidean_distance, lr0: float = 1e-3,
               epochs: int = 300, seed: int = 0, gamma: float = 0.999) -> SimilarityHead:
    """Fit the sigmoid head by seeded per-sample SGD.

    Learning rate decays exponentially, lr(t) = lr0 * gamma^t per epoch.
    Deterministic given the seed. Raises if the loss goes non-finite or the
    pair set lacks one of the labels.
    """
    pairs.validate()
    distances = pairs.distances(distance_fn)
    labels = pairs.labels()
    dim = pairs.pairs[0][0].shape[0]

    rng = np.random.default_rng(seed)
    w, b = 0.0, 0.0
    initial_loss, _, _ = loss_and_grad(w, b, distances, labels)
    n = len(distances)
    lr = lr0
    for _ in range(epochs):
        for i in rng.permutation(n):
            z = w * distances[i] + b
            residual = 1.0 / (1.0 + math.exp(-z)) - labels[i]
            w -= lr * residual * distances[i]
            b -= lr * residual
        lr *= gamma
    final_loss, _, _ = loss_and_grad(w, b, distances, labels)
    if not (math.isfinite(final_loss) and math.isfinite(w) and math.isfinite(b)):
        raise SimilarityError("training diverged to a non-finite state")

    metric_name = getattr(distance_fn, "__name__", "euclidean").replace("_distance", "")
    return SimilarityHead(w=w, b=b, dim=dim,
                          trained_on={"metric": metric_name, "pairs": n,
                                      "epochs": epochs, "lr0": lr0, "gamma": gamma,
                                      "seed": seed,
                                      "initial_loss": initial_loss,
                                      "final_loss": final_loss})


def pair_accuracy(head: SimilarityHead, distances: np.ndarray, labels: np.ndarray,
                  threshold: float = 0.5) -> float:
    """Fraction of pairs the head classifies correctly at `threshold`."""
    scores = head.score(np.asarray(distances, dtype=np.float64))
    predicted = (scores > threshold).astype(np.float64)
    return float(np.mean(predicted == np.asarray(labels, dtype=np.float64)))
