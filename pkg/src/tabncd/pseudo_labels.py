"""Pairwise pseudo labels from latent cosine similarity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

@dataclass
class TopKConfig:
    topk_percent: float = 5.0
    # similarity threshold; when set, pairs with cosine >= threshold are positive
    threshold: float | None = None

    def __post_init__(self):
        if not 0.0 < self.topk_percent <= 100.0:
            raise ValueError(f"topk_percent must be in (0, 100], got {self.topk_percent}")

    def k_effective(self, m):
        return max(1, math.floor(self.topk_percent / 100.0 * (m - 1)))


@dataclass
class PairwisePseudoLabels:
    indices: np.ndarray
    y_hat: np.ndarray
    k_effective: int


class BatchTooSmall(ValueError):
    pass


def cosine_similarity_matrix(z):
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1)
    # zero rows stay zero (similarity 0 to everything) without an additive eps
    unit = z / np.where(norms > 0.0, norms, 1.0)[:, None]
    s = unit @ unit.T
    # exact symmetry regardless of BLAS blocking
    return (s + s.T) / 2.0


def assign_pseudo_labels(z, cfg: TopKConfig, indices=None):
    """Mark each row's ``k`` most similar other rows as positives.

    Ties go to the lower column index.  The relation is row-wise, so it need
    not be symmetric.  The diagonal is always 0.
    """
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[0]
    if m < 2:
        raise BatchTooSmall(f"need at least 2 rows for pairwise labels, got {m}")
    s = cosine_similarity_matrix(z)
    indices = np.arange(m) if indices is None else np.asarray(indices)
    if cfg.threshold is not None:
        y = (s >= cfg.threshold).astype(np.float64)
        np.fill_diagonal(y, 0.0)
        return PairwisePseudoLabels(indices, y, -1)
    k = cfg.k_effective(m)
    np.fill_diagonal(s, -np.inf)
    # stable sort on the negated similarity keeps lower indices first on ties
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    y = np.zeros((m, m))
    np.put_along_axis(y, order, 1.0, axis=1)
    return PairwisePseudoLabels(indices, y, k)


def pair_agreement_scores(probs):
    probs = np.asarray(probs, dtype=np.float64)
    p = probs @ probs.T
    return (p + p.T) / 2.0
