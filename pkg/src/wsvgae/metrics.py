"""Link-prediction ranking scores and community-detection agreement scores.

AUC and average precision are computed directly from rank statistics so
that tie handling is explicit and deterministic. Clustering (k-means) and
the chance-adjusted agreement measures (AMI with arithmetic-mean
normalization, ARI) are delegated to scikit-learn, which implements the
exact standard formulas; the test suite holds independent brute-force
references for all four scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_mutual_info_score, adjusted_rand_score

from .ndmath import RngStream

__all__ = [
    "ScoredPairs",
    "Clustering",
    "roc_auc",
    "average_precision",
    "kmeans",
    "ami",
    "ari",
]


@dataclass(frozen=True)
class ScoredPairs:
    """Parallel score/label arrays for edge-vs-non-edge classification."""

    scores: np.ndarray
    labels: np.ndarray

    @staticmethod
    def from_pos_neg(pos_scores: np.ndarray, neg_scores: np.ndarray) -> "ScoredPairs":
        scores = np.concatenate([np.asarray(pos_scores, dtype=np.float64),
                                 np.asarray(neg_scores, dtype=np.float64)])
        labels = np.concatenate([np.ones(len(pos_scores), dtype=np.int64),
                                 np.zeros(len(neg_scores), dtype=np.int64)])
        return ScoredPairs(scores=scores, labels=labels)

    def validate(self) -> None:
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be parallel 1-D arrays")
        n_pos = int(self.labels.sum())
        if n_pos == 0 or n_pos == self.labels.size:
            raise ValueError("need at least one positive and one negative")


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray
    k: int
    inertia: float


def roc_auc(sp: ScoredPairs) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties 1/2."""
    sp.validate()
    ranks = rankdata(sp.scores, method="average")
    n_pos = int(sp.labels.sum())
    n_neg = sp.labels.size - n_pos
    pos_rank_sum = float(ranks[sp.labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(sp: ScoredPairs) -> float:
    """Step-interpolated AP over the descending-score ranking.

    Ties are broken deterministically by original pair index (stable sort),
    which matters at sigmoid saturation where equal scores are common.
    """
    sp.validate()
    order = np.argsort(-sp.scores, kind="stable")
    hits = sp.labels[order] == 1
    n_pos = int(hits.sum())
    cum_hits = np.cumsum(hits)
    precisions = cum_hits[hits] / (np.flatnonzero(hits) + 1.0)
    return float(precisions.sum() / n_pos)


def kmeans(
    z: np.ndarray,
    k: int,
    restarts: int = 10,
    max_iter: int = 300,
    rng: RngStream | None = None,
) -> Clustering:
    """Lloyd's k-means with k-means++ seeding, best inertia over restarts."""
    z = np.asarray(z, dtype=np.float64)
    if k > z.shape[0]:
        raise ValueError(f"k={k} exceeds number of points {z.shape[0]}")
    if k < 2:
        raise ValueError("k must be at least 2")
    seed = int(rng.integers(0, 2**31 - 1)) if rng is not None else 0
    km = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=restarts,
        max_iter=max_iter,
        algorithm="lloyd",
        random_state=seed,
    ).fit(z)
    return Clustering(
        assignments=km.labels_.astype(np.int64),
        k=k,
        inertia=float(km.inertia_),
    )


def _check_labels(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label arrays must be parallel 1-D arrays")
    return a, b


def ami(a: np.ndarray, b: np.ndarray) -> float:
    """Adjusted Mutual Information, arithmetic-mean entropy normalization."""
    a, b = _check_labels(a, b)
    return float(adjusted_mutual_info_score(a, b, average_method="arithmetic"))


def ari(a: np.ndarray, b: np.ndarray) -> float:
    """Adjusted Rand Index from the pair-counting contingency formula."""
    a, b = _check_labels(a, b)
    return float(adjusted_rand_score(a, b))
