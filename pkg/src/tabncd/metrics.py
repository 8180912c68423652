"""Clustering metrics on the unlabelled test rows.

ACC and BACC are computed after matching predicted clusters to classes with
the Hungarian algorithm.  NMI uses the arithmetic mean of the two entropies
as normaliser.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

NMI_NORMALIZER = "arithmetic"


def hungarian_assignment(cost):
    """Minimum-cost assignment for a square or rectangular cost matrix.

    Shortest augmenting path formulation with row/column potentials,
    O(n^3).  Rectangular inputs are padded with zero-cost rows/columns.
    Returns ``perm`` such that row ``i`` is assigned to column ``perm[i]``
    (only the original rows/columns are reported: ``perm[i] == -1`` means
    row ``i`` was matched to padding).
    """
    cost = np.asarray(cost, dtype=np.float64)
    n_rows, n_cols = cost.shape
    n = max(n_rows, n_cols)
    c = np.zeros((n, n))
    c[:n_rows, :n_cols] = cost

    inf = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    way = np.zeros(n + 1, dtype=np.int64)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row, 1-based, 0 = free
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    perm = np.full(n_rows, -1, dtype=np.int64)
    for j in range(1, n + 1):
        row = match[j] - 1
        if row < n_rows and j - 1 < n_cols:
            perm[row] = j - 1
    return perm


def assignment_cost(cost, perm):
    cost = np.asarray(cost)
    return float(sum(cost[i, j] for i, j in enumerate(perm) if j >= 0))


def contingency(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    p_vals, p_idx = np.unique(pred, return_inverse=True)
    t_vals, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((p_vals.size, t_vals.size), dtype=np.int64)
    np.add.at(table, (p_idx, t_idx), 1)
    return table, p_vals, t_vals


def clustering_accuracy(pred, truth):
    """Return ``(acc, bacc, mapping)`` with ``mapping`` cluster -> class."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty labelings")
    table, p_vals, t_vals = contingency(pred, truth)
    # counts first; among count-optimal mappings prefer the highest summed
    # recall, whose total (< n_classes + 1) cannot outweigh one matched row
    recall = table / table.sum(axis=0, keepdims=True)
    perm = hungarian_assignment(-(table * (t_vals.size + 1.0) + recall))
    mapping = {}
    matched = 0
    for i, j in enumerate(perm):
        if j >= 0:
            mapping[p_vals[i].item()] = t_vals[j].item()
            matched += table[i, j]
    acc = matched / pred.size
    recalls = []
    for j, t in enumerate(t_vals):
        rows = [i for i, jj in enumerate(perm) if jj == j]
        hit = table[rows[0], j] if rows else 0
        recalls.append(hit / table[:, j].sum())
    return float(acc), float(np.mean(recalls)), mapping


def _entropy(counts):
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    table, _, _ = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_truth = _entropy(table.sum(axis=0))
    if h_pred == 0.0 or h_truth == 0.0:
        # both single-cluster: identical partitions
        return 1.0 if h_pred == h_truth else 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return float(mi / ((h_pred + h_truth) / 2.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(pred, truth):
    table, _, _ = contingency(pred, truth)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        # degenerate: both labelings trivial in the same way
        return 1.0 if sum_ij == expected else 0.0
    return float((sum_ij - expected) / (max_index - expected))


@dataclass
class EvalReport:
    bacc: float
    acc: float
    nmi: float
    ari: float
    mapping: dict
    n_eval: int
    seed: int | None = None
    run_id: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["mapping"] = {str(k): v for k, v in self.mapping.items()}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["mapping"] = {int(k): v for k, v in d["mapping"].items()}
        return cls(**d)


def score(pred, truth, seed=None, run_id=None, meta=None):
    acc, bacc, mapping = clustering_accuracy(pred, truth)
    info = {"nmi_normalizer": NMI_NORMALIZER}
    info.update(meta or {})
    return EvalReport(
        bacc=bacc, acc=acc, nmi=nmi(pred, truth), ari=ari(pred, truth),
        mapping=mapping, n_eval=int(len(pred)), seed=seed, run_id=run_id, meta=info,
    )


def evaluate(predict, ds, seed=None, run_id=None, meta=None):
    """Score predictions on the unlabelled test rows of ``ds``.

    ``predict`` is either an array of cluster ids (one per unlabelled test
    row, in row order) or a callable taking the feature rows.
    """
    idx = ds.subset(train=False, labelled=False)
    if idx.size == 0:
        raise ValueError("dataset has no unlabelled test rows")
    pred = predict(ds.features[idx]) if callable(predict) else np.asarray(predict)
    if len(pred) != idx.size:
        raise ValueError(f"expected {idx.size} predictions, got {len(pred)}")
    return score(pred, ds.unknown_targets(idx), seed=seed, run_id=run_id, meta=meta)
