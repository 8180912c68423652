"""Joint classification / clustering training on a shared encoder.

Each batch triggers two updates.  First the classification head (known
classes plus one aggregate class for every unlabelled row) and the encoder
step on their own AdamW optimizer.  Then the unlabelled rows are re-encoded
and the clustering head and encoder step on a second optimizer, driven by
pairwise pseudo labels and a consistency penalty against augmented rows.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentConfig, NeighborAugmenter
from .data import TabularDataset, batch_sampler
from .nn import (
    EPS,
    Activation,
    AdamW,
    bce_loss,
    ce_loss,
    ce_loss_grad,
    mse_loss,
    mse_loss_grad,
    one_hot,
    softmax,
    softmax_backward,
)
from .pseudo_labels import (
    BatchTooSmall,
    TopKConfig,
    assign_pseudo_labels,
    pair_agreement_scores,
)
from .ssl import TrainingDiverged, make_encoder, make_head

log = logging.getLogger(__name__)


@dataclass
class JointConfig:
    w1: float = 0.8
    w2: float = 0.8
    lr_classif: float = 1e-3
    lr_cluster: float = 1e-3
    topk_percent: float = 5.0
    k_neighbors: int = 5
    epochs: int = 30
    batch_size: int = 512
    dropout: float = 0.0
    activation: str = "relu"
    weight_decay: float = 0.01

    def __post_init__(self):
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.lr_classif < 0 or self.lr_cluster < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        Activation(self.activation)

    @property
    def topk(self):
        return TopKConfig(self.topk_percent)

    @property
    def aug(self):
        return AugmentConfig(self.k_neighbors)


ABLATIONS = ("ssl", "ce", "bce", "mse")


@dataclass
class Ablation:
    """Which components are switched OFF."""

    ssl: bool = False
    ce: bool = False
    bce: bool = False
    mse: bool = False

    @classmethod
    def parse(cls, items):
        items = [i.strip().lower() for i in (items or []) if i.strip()]
        unknown = [i for i in items if i not in ABLATIONS]
        if unknown:
            raise ValueError(f"unknown ablation(s) {unknown}; choose from {ABLATIONS}")
        return cls(**{i: True for i in items})

    def names(self):
        return [k for k, v in asdict(self).items() if v]


# -- losses ----------------------------------------------------------------


def classification_loss(probs, targets, probs_clean, probs_aug, w1, use_ce=True, use_mse=True):
    """Return ``(total, ce, reg)``.

    ``probs`` are classification-head outputs for every batch row and
    ``targets`` their one-hot targets (unlabelled rows on the aggregate
    class).  The consistency term compares labelled rows with their
    augmentations.
    """
    ce = ce_loss(probs, targets) if use_ce else 0.0
    reg = mse_loss(probs_clean, probs_aug) if use_mse and probs_aug.shape[0] else 0.0
    return w1 * ce + (1.0 - w1) * reg, ce, reg


def pairwise_bce(p, y_hat):
    """Mean BCE between agreement scores and pseudo labels over pairs i != j."""
    m = p.shape[0]
    off = ~np.eye(m, dtype=bool)
    return bce_loss(p[off], y_hat[off])


def pairwise_bce_grad(p, y_hat):
    raw = p
    m = p.shape[0]
    n_pairs = m * (m - 1)
    pc = np.clip(raw, EPS, 1.0 - EPS)
    g = (-y_hat / pc + (1.0 - y_hat) / (1.0 - pc)) / n_pairs
    g[(raw < EPS) | (raw > 1.0 - EPS)] = 0.0
    np.fill_diagonal(g, 0.0)
    return g


def clustering_loss(probs_u, y_hat, probs_aug, w2, use_bce=True, use_mse=True):
    """Return ``(total, bce, reg)`` for one unlabelled sub-batch."""
    bce = pairwise_bce(pair_agreement_scores(probs_u), y_hat) if use_bce else 0.0
    reg = mse_loss(probs_u, probs_aug) if use_mse else 0.0
    return w2 * bce + (1.0 - w2) * reg, bce, reg


# -- model -------------------------------------------------------------------


@dataclass
class JointModel:
    encoder: object
    classif_head: object
    cluster_head: object
    n_known: int
    n_unknown: int
    opt_classif: AdamW = None
    opt_cluster: AdamW = None

    @classmethod
    def create(cls, encoder, n_known, n_unknown, rng):
        h = encoder.out_dim
        return cls(
            encoder=encoder,
            classif_head=make_head(h, n_known + 1, rng),
            cluster_head=make_head(h, n_unknown, rng),
            n_known=n_known,
            n_unknown=n_unknown,
        )

    def make_optimizers(self, cfg: JointConfig):
        self.opt_classif = AdamW(
            self.encoder.parameters() + self.classif_head.parameters(),
            lr=cfg.lr_classif, weight_decay=cfg.weight_decay,
        )
        self.opt_cluster = AdamW(
            self.encoder.parameters() + self.cluster_head.parameters(),
            lr=cfg.lr_cluster, weight_decay=cfg.weight_decay,
        )

    def networks(self):
        return {
            "encoder": self.encoder,
            "classif_head": self.classif_head,
            "cluster_head": self.cluster_head,
        }

    def train(self):
        for net in self.networks().values():
            net.train()

    def eval(self):
        for net in self.networks().values():
            net.eval()

    def snapshot(self):
        return {k: [p.copy() for p in v.parameters()] for k, v in self.networks().items()}

    def restore(self, snap):
        for k, net in self.networks().items():
            for p, saved in zip(net.parameters(), snap[k]):
                p[...] = saved

    def embed(self, x):
        self.eval()
        return self.encoder.forward(x)

    def cluster_probs(self, x):
        self.eval()
        return softmax(self.cluster_head.forward(self.encoder.forward(x)))

    def classif_probs(self, x):
        self.eval()
        return softmax(self.classif_head.forward(self.encoder.forward(x)))


def predict_clusters(model: JointModel, rows, chunk=4096):
    """Argmax of the clustering head, evaluated in eval mode."""
    rows = np.asarray(rows, dtype=np.float64)
    out = [np.argmax(model.cluster_probs(rows[s:s + chunk]), axis=1)
           for s in range(0, rows.shape[0], chunk)]
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


# -- one step ------------------------------------------------------------------


def _through(net_head, encoder, probs, grad_probs):
    """Back-propagate dL/dprobs through a softmax head and the encoder."""
    g_logits = softmax_backward(probs, grad_probs)
    g_head, g_z = net_head.backward(g_logits)
    g_enc, _ = encoder.backward(g_z)
    return g_enc, g_head


def classification_objective(model, x, targets, lab_pos, x_aug, cfg, ablation):
    """Forward, loss and gradients of the classification update.

    ``x`` is the whole batch, ``targets`` its one-hot targets over
    ``n_known + 1`` classes, ``lab_pos`` the labelled positions within the
    batch and ``x_aug`` augmentations of those labelled rows.
    """
    n = x.shape[0]
    stacked = np.vstack([x, x_aug]) if x_aug.shape[0] else x
    z = model.encoder.forward(stacked)
    probs = softmax(model.classif_head.forward(z))
    p_batch, p_aug = probs[:n], probs[n:]
    p_clean = p_batch[lab_pos]
    use_ce, use_mse = not ablation.ce, not ablation.mse
    total, ce, reg = classification_loss(p_batch, targets, p_clean, p_aug, cfg.w1, use_ce, use_mse)

    grad = np.zeros_like(probs)
    if use_ce:
        grad[:n] += cfg.w1 * ce_loss_grad(p_batch, targets)
    if use_mse and p_aug.shape[0]:
        g = (1.0 - cfg.w1) * mse_loss_grad(p_clean, p_aug)
        grad[lab_pos] += g
        grad[n:] -= g
    g_enc, g_head = _through(model.classif_head, model.encoder, probs, grad)
    return (total, ce, reg), g_enc + g_head


def clustering_objective(model, x_u, x_aug, cfg, ablation, topk=None):
    """Forward, pseudo labels, loss and gradients of the clustering update."""
    m = x_u.shape[0]
    z = model.encoder.forward(np.vstack([x_u, x_aug]))
    probs = softmax(model.cluster_head.forward(z))
    p_u, p_aug = probs[:m], probs[m:]
    labels = assign_pseudo_labels(z[:m], topk or cfg.topk)
    use_bce, use_mse = not ablation.bce, not ablation.mse
    total, bce, reg = clustering_loss(p_u, labels.y_hat, p_aug, cfg.w2, use_bce, use_mse)

    grad = np.zeros_like(probs)
    if use_bce:
        g_p = cfg.w2 * pairwise_bce_grad(pair_agreement_scores(p_u), labels.y_hat)
        grad[:m] += (g_p + g_p.T) @ p_u
    if use_mse:
        g = (1.0 - cfg.w2) * mse_loss_grad(p_u, p_aug)
        grad[:m] += g
        grad[m:] -= g
    g_enc, g_head = _through(model.cluster_head, model.encoder, probs, grad)
    return (total, bce, reg), g_enc + g_head, labels


@dataclass
class StepResult:
    classification: float | None = None
    ce: float | None = None
    classif_reg: float | None = None
    clustering: float | None = None
    bce: float | None = None
    cluster_reg: float | None = None
    labels: object = None
    skipped_small: bool = False


class _Pools:
    """Maps dataset rows to augmentation pools."""

    def __init__(self, ds: TabularDataset, k):
        lab = ds.subset(train=True, labelled=True)
        unl = ds.subset(train=True, labelled=False)
        self.pos = np.full(ds.features.shape[0], -1, dtype=np.int64)
        self.pos[lab] = np.arange(lab.size)
        self.pos[unl] = np.arange(unl.size)
        self.labelled = NeighborAugmenter(ds.features[lab], k, ds.labels[lab])
        self.unlabelled = NeighborAugmenter(ds.features[unl], k)


def train_step(model, ds, batch, cfg, ablation, pools, rng, update_cluster=True):
    """Classification update followed by clustering update on one batch."""
    res = StepResult()
    x = ds.features[batch.index]
    lab_rows = batch.index[batch.labelled]
    unl_rows = batch.index[batch.unlabelled]

    if lab_rows.size:
        targets = np.where(ds.is_labelled[batch.index], ds.labels[batch.index], model.n_known)
        targets = one_hot(targets, model.n_known + 1)
        if ablation.mse:
            x_aug = np.empty((0, x.shape[1]))
        else:
            x_aug = pools.labelled.augment(pools.pos[lab_rows], rng)
        (total, ce, reg), grads = classification_objective(
            model, x, targets, batch.labelled, x_aug, cfg, ablation
        )
        if not np.isfinite(total):
            raise TrainingDiverged(f"non-finite classification loss {total}")
        model.opt_classif.step(grads)
        res.classification, res.ce, res.classif_reg = total, ce, reg

    if not update_cluster:
        return res
    if unl_rows.size < 2:
        res.skipped_small = True
        return res
    x_u = ds.features[unl_rows]
    x_u_aug = pools.unlabelled.augment(pools.pos[unl_rows], rng)
    try:
        (total, bce, reg), grads, labels = clustering_objective(model, x_u, x_u_aug, cfg, ablation)
    except BatchTooSmall:
        res.skipped_small = True
        return res
    if not np.isfinite(total):
        raise TrainingDiverged(f"non-finite clustering loss {total}")
    model.opt_cluster.step(grads)
    res.clustering, res.bce, res.cluster_reg = total, bce, reg
    res.labels = labels
    res.labels.indices = unl_rows
    return res


def pseudo_label_precision(labels, truth):
    """Share of positive pairs that truly share a class (diagnostic only)."""
    same = truth[:, None] == truth[None, :]
    pos = labels.y_hat == 1.0
    if not pos.any():
        return float("nan")
    return float(same[pos].mean())


@dataclass
class TrainResult:
    model: JointModel
    history: list = field(default_factory=list)
    skipped_batches: int = 0


def run_training(ds: TabularDataset, cfg: JointConfig, ablation=None, encoder=None, seed=0,
                 diagnostics=True, on_epoch=None):
    """Full joint-training loop.

    ``encoder`` is the pretrained encoder (copied, never mutated in place);
    a freshly initialised one is used when it is None or when the SSL
    ablation is on.
    """
    ablation = ablation or Ablation()
    rng = np.random.default_rng(seed)
    if encoder is None or ablation.ssl:
        enc = make_encoder(ds.n_features, rng, Activation(cfg.activation), cfg.dropout)
    else:
        enc = encoder.copy()
        for layer in enc.layers:
            layer.dropout_rate = cfg.dropout
    enc.rng = rng
    model = JointModel.create(enc, ds.n_known, ds.n_unknown, rng)
    for net in model.networks().values():
        net.rng = rng
    model.make_optimizers(cfg)
    pools = _Pools(ds, cfg.k_neighbors)
    result = TrainResult(model)

    lab_train = ds.subset(train=True, labelled=True)
    for epoch in range(cfg.epochs):
        last_good = model.snapshot()
        model.train()
        sums = {"classification": [], "clustering": [], "ce": [], "bce": [],
                "classif_reg": [], "cluster_reg": []}
        precisions = []
        for batch in batch_sampler(ds, cfg.batch_size, rng):
            try:
                res = train_step(model, ds, batch, cfg, ablation, pools, rng)
            except TrainingDiverged as exc:
                model.restore(last_good)
                exc.last_good = model
                raise
            if res.skipped_small:
                result.skipped_batches += 1
            for key in sums:
                val = getattr(res, key)
                if val is not None:
                    sums[key].append(val)
            if diagnostics and res.labels is not None:
                precisions.append(pseudo_label_precision(res.labels, ds.labels[res.labels.indices]))
        entry = {"epoch": epoch}
        entry.update({k: (float(np.mean(v)) if v else None) for k, v in sums.items()})
        if diagnostics:
            if lab_train.size:
                pred = np.argmax(model.classif_probs(ds.features[lab_train]), axis=1)
                entry["train_known_acc"] = float(np.mean(pred == ds.labels[lab_train]))
            entry["pseudo_label_precision"] = float(np.nanmean(precisions)) if precisions else None
        result.history.append(entry)
        if on_epoch is not None:
            on_epoch(epoch, model, entry)
        log.debug("joint epoch %d %s", epoch, entry)
    model.eval()
    return result
