"""Neighbour-interpolation augmentation in the style of SMOTE.

A row is moved a random fraction of the way towards one of its ``k``
nearest neighbours.  Labelled rows only look at training rows of their own
class; unlabelled rows only look at the unlabelled training pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

_CHUNK = 1024


@dataclass
class AugmentConfig:
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")


def nearest_neighbors(pool, k, queries=None, exclude_self=True):
    """Brute-force Euclidean kNN.

    When ``queries`` is None every pool row queries the pool and its own
    position is excluded.  Returns an index array of shape ``(n, k')`` with
    ``k' = min(k, available)``, closest first (ties resolved by index).
    """
    pool = np.asarray(pool, dtype=np.float64)
    self_query = queries is None
    queries = pool if self_query else np.asarray(queries, dtype=np.float64)
    available = pool.shape[0] - (1 if self_query and exclude_self else 0)
    k_eff = min(k, max(available, 0))
    n = queries.shape[0]
    if k_eff == 0:
        return np.empty((n, 0), dtype=np.int64)
    sq_pool = np.einsum("ij,ij->i", pool, pool)
    out = np.empty((n, k_eff), dtype=np.int64)
    for start in range(0, n, _CHUNK):
        q = queries[start:start + _CHUNK]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * q @ pool.T + sq_pool[None, :]
        if self_query and exclude_self:
            rows = np.arange(q.shape[0])
            d2[rows, start + rows] = np.inf
        if k_eff < pool.shape[0]:
            part = np.argpartition(d2, k_eff - 1, axis=1)[:, :k_eff]
        else:
            part = np.tile(np.arange(pool.shape[0]), (q.shape[0], 1))
        # order the k candidates by (distance, index)
        dist = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, dist), axis=1)
        block = np.take_along_axis(part, order, axis=1)
        # argpartition picks arbitrarily among rows tied with the k-th distance
        kth = dist.max(axis=1, keepdims=True)
        for r in np.flatnonzero((d2 <= kth).sum(axis=1) > k_eff):
            idx = np.flatnonzero(d2[r] <= kth[r])
            block[r] = idx[np.argsort(d2[r, idx], kind="stable")][:k_eff]
        out[start:start + q.shape[0]] = block
    return out


def interpolate(x, partner, lam):
    """``x + lam * (partner - x)`` row-wise, ``lam`` of shape ``(n,)``."""
    return x + lam[:, None] * (partner - x)


class NeighborAugmenter:
    """Precomputed neighbour lists over a fixed pool of training rows.

    ``groups`` restricts candidates to rows sharing the same group value
    (the class label for the labelled pool).  ``augment`` takes positions
    into the pool.
    """

    def __init__(self, pool, k, groups=None):
        self.pool = np.asarray(pool, dtype=np.float64)
        self.k = k
        n = self.pool.shape[0]
        self.neighbors = [None] * n
        if groups is None:
            groups = np.zeros(n, dtype=np.int64)
        groups = np.asarray(groups)
        self.groups = groups
        for g in np.unique(groups):
            members = np.flatnonzero(groups == g)
            nn = nearest_neighbors(self.pool[members], k)
            if nn.shape[1] < k:
                log.warning("group %s has only %d candidate neighbours (k=%d)", g, nn.shape[1], k)
            for pos, row in zip(members, nn):
                self.neighbors[pos] = members[row]

    def pick(self, positions, rng):
        """One uniformly chosen neighbour per position (-1 if none exist)."""
        out = np.empty(len(positions), dtype=np.int64)
        for i, p in enumerate(positions):
            cands = self.neighbors[p]
            out[i] = cands[rng.integers(cands.size)] if cands.size else -1
        return out

    def augment(self, positions, rng, return_partners=False):
        positions = np.asarray(positions, dtype=np.int64)
        x = self.pool[positions]
        partners = self.pick(positions, rng)
        lam = rng.random(positions.size)
        has = partners >= 0
        if not has.all():
            log.warning("%d rows have no neighbour and are returned unchanged", int((~has).sum()))
        partner_rows = np.where(has[:, None], self.pool[np.where(has, partners, 0)], x)
        out = interpolate(x, partner_rows, np.where(has, lam, 0.0))
        if return_partners:
            return out, partners, lam
        return out


def augment_labelled(positions, pool, pool_labels, cfg: AugmentConfig, rng=None, augmenter=None):
    """Augment labelled pool rows towards same-class neighbours."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    augmenter = augmenter or NeighborAugmenter(pool, cfg.k_neighbors, pool_labels)
    return augmenter.augment(positions, rng)


def augment_unlabelled(positions, pool, cfg: AugmentConfig, rng=None, augmenter=None):
    """Augment unlabelled pool rows towards neighbours in the same pool."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    augmenter = augmenter or NeighborAugmenter(pool, cfg.k_neighbors)
    return augmenter.augment(positions, rng)
