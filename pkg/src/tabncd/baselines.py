"""Competitors: k-means on raw or learned representations, and the
classifier-penultimate-layer probe."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import TabularDataset, batch_sampler
from .metrics import evaluate
from .nn import Activation, AdamW, ce_loss_grad, one_hot, softmax, softmax_backward
from .ssl import make_encoder, make_head

log = logging.getLogger(__name__)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_path: list


def _sq_dists(x, centroids, x_sq=None):
    x_sq = np.einsum("ij,ij->i", x, x) if x_sq is None else x_sq
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    d = x_sq[:, None] - 2.0 * x @ centroids.T + c_sq[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x, k, rng, x_sq=None, n_local_trials=None):
    """Greedy k-means++ seeding (2 + log k local trials per centre)."""
    n = x.shape[0]
    n_local_trials = n_local_trials or 2 + int(np.log(k))
    x_sq = np.einsum("ij,ij->i", x, x) if x_sq is None else x_sq
    centers = np.empty((k, x.shape[1]))
    first = rng.integers(n)
    centers[0] = x[first]
    closest = _sq_dists(x, centers[:1], x_sq)[:, 0]
    pot = closest.sum()
    for c in range(1, k):
        if pot <= 0:
            centers[c] = x[rng.integers(n)]
            continue
        cand = np.searchsorted(np.cumsum(closest), rng.random(n_local_trials) * pot)
        cand = np.minimum(cand, n - 1)
        d_cand = np.minimum(closest[None, :], _sq_dists(x, x[cand], x_sq).T)
        pots = d_cand.sum(axis=1)
        best = int(np.argmin(pots))
        centers[c] = x[cand[best]]
        closest = d_cand[best]
        pot = pots[best]
    return centers


def _lloyd(x, centers, max_iter, tol, x_sq):
    labels = None
    path = []
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centers, x_sq)
        new_labels = np.argmin(d, axis=1)
        path.append(float(d[np.arange(x.shape[0]), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        new_centers = np.empty_like(centers)
        counts = np.bincount(labels, minlength=centers.shape[0])
        for c in range(centers.shape[0]):
            if counts[c]:
                new_centers[c] = x[labels == c].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed empty clusters at the points farthest from their centre
            far = np.argsort(-d[np.arange(x.shape[0]), labels], kind="stable")
            for c, p in zip(empty, far):
                new_centers[c] = x[p]
        shift = np.sum((new_centers - centers) ** 2)
        centers = new_centers
        if shift <= tol and not empty.size:
            d = _sq_dists(x, centers, x_sq)
            labels = np.argmin(d, axis=1)
            path.append(float(d[np.arange(x.shape[0]), labels].sum()))
            break
    d = _sq_dists(x, centers, x_sq)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(x.shape[0]), labels].sum())
    return labels, centers, inertia, it, path


def kmeans(x, k, seed=0, n_init=10, max_iter=300, tol=0.0):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` restarts."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= x.shape[0]:
        raise ValueError(f"k must be in [1, n={x.shape[0]}], got {k}")
    rng = np.random.default_rng(seed)
    x_sq = np.einsum("ij,ij->i", x, x)
    best = None
    for _ in range(n_init):
        centers = kmeans_plusplus(x, k, rng, x_sq)
        labels, centers, inertia, n_iter, path = _lloyd(x, centers, max_iter, tol, x_sq)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centers, inertia, n_iter, path)
    return best


def kmeans_report(ds: TabularDataset, features=None, seed=0, n_init=10, meta=None):
    """k-means with k = number of unknown classes on the unlabelled test rows."""
    idx = ds.subset(train=False, labelled=False)
    feats = ds.features[idx] if features is None else features
    res = kmeans(feats, ds.n_unknown, seed=seed, n_init=n_init)
    return evaluate(res.labels, ds, seed=seed, meta=meta)


@dataclass
class ProbeConfig:
    epochs: int = 30
    batch_size: int = 512
    lr: float = 1e-3
    dropout: float = 0.0
    activation: str = "relu"
    weight_decay: float = 0.01


def train_known_classifier(ds: TabularDataset, cfg: ProbeConfig, seed=0):
    """Encoder + linear softmax classifier fit on the labelled training rows."""
    rng = np.random.default_rng(seed)
    enc = make_encoder(ds.n_features, rng, Activation(cfg.activation), cfg.dropout)
    head = make_head(enc.out_dim, ds.n_known, rng)
    opt = AdamW(enc.parameters() + head.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    rows = ds.subset(train=True, labelled=True)
    for _ in range(cfg.epochs):
        enc.train()
        head.train()
        for batch in batch_sampler(ds, cfg.batch_size, rng, rows=rows):
            x = ds.features[batch.index]
            target = one_hot(ds.labels[batch.index], ds.n_known)
            probs = softmax(head.forward(enc.forward(x)))
            g_head, g_z = head.backward(softmax_backward(probs, ce_loss_grad(probs, target)))
            g_enc, _ = enc.backward(g_z)
            opt.step(g_enc + g_head)
    enc.eval()
    head.eval()
    pred = np.argmax(softmax(head.forward(enc.forward(ds.features[rows]))), axis=1)
    train_acc = float(np.mean(pred == ds.labels[rows]))
    return enc, head, train_acc


def baseline_classifier_probe(ds: TabularDataset, cfg: ProbeConfig, seed=0, n_init=10):
    """k-means on the penultimate layer of a known-class classifier.

    Unlabelled labels are only read by the final evaluation.
    """
    enc, _, train_acc = train_known_classifier(ds, cfg, seed)
    idx = ds.subset(train=False, labelled=False)
    z = enc.forward(ds.features[idx])
    res = kmeans(z, ds.n_unknown, seed=seed, n_init=n_init)
    return evaluate(res.labels, ds, seed=seed,
                    meta={"method": "classifier-probe", "train_known_acc": train_acc})


def representation_probe(ds: TabularDataset, stage, encoder=None, seed=0, n_init=10):
    """k-means on raw features or on an encoder's latent space."""
    if stage not in ("raw", "ssl", "joint"):
        raise ValueError(f"unknown stage {stage!r}")
    idx = ds.subset(train=False, labelled=False)
    if stage == "raw":
        feats = ds.features[idx]
    else:
        if encoder is None:
            raise FileNotFoundError(f"stage {stage!r} needs an encoder checkpoint")
        encoder.eval()
        feats = encoder.forward(ds.features[idx])
    res = kmeans(feats, ds.n_unknown, seed=seed, n_init=n_init)
    return evaluate(res.labels, ds, seed=seed, meta={"method": f"repr-probe:{stage}"})


def logistic_feature_importance(ds: TabularDataset, max_iter=1000):
    """Per-class coefficients of a one-vs-rest logistic regression.

    Fit on all training rows with their true labels; returns
    ``(class_names, coef)`` with ``coef`` of shape ``(n_classes, d)``.  This
    reads unlabelled ground truth and is diagnostic only.
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.multiclass import OneVsRestClassifier

    idx = ds.train_idx
    clf = OneVsRestClassifier(LogisticRegression(max_iter=max_iter))
    clf.fit(ds.features[idx], ds.labels[idx])
    coef = np.vstack([est.coef_[0] for est in clf.estimators_])
    return [ds.class_names[c] for c in clf.classes_], coef
