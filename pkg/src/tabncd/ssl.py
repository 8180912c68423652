"""Encoder pretraining with mask-corruption pretext tasks.

Cells of an input row are swapped, with probability ``p_m``, for the same
column of a random training row.  The encoder feeds two linear heads: one
reconstructs the clean row, the other predicts which cells were swapped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .nn import (
    Activation,
    AdamW,
    DenseLayer,
    DenseNetwork,
    bce_loss,
    bce_loss_grad,
    mse_loss,
    mse_loss_grad,
)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class CorruptionConfig:
    p_m: float = 0.30
    alpha: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_m <= 1.0:
            raise ValueError(f"p_m must be in [0, 1], got {self.p_m}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass
class CorruptedBatch:
    x: np.ndarray
    mask: np.ndarray
    x_tilde: np.ndarray


def corrupt(batch, training_features, p_m, rng):
    """Swap cells for draws from each column's empirical marginal."""
    batch = np.asarray(batch, dtype=np.float64)
    pool = np.asarray(training_features, dtype=np.float64)
    if pool.shape[0] == 0 or pool.shape[1] != batch.shape[1]:
        raise ValueError("training_features must be non-empty with the batch's width")
    n, d = batch.shape
    mask = (rng.random((n, d)) < p_m).astype(np.float64)
    donors = rng.integers(0, pool.shape[0], size=(n, d))
    x_bar = pool[donors, np.arange(d)[None, :]]
    x_tilde = np.where(mask == 1.0, x_bar, batch)
    return CorruptedBatch(batch, mask, x_tilde)


def vime_loss(x, m, x_hat, m_hat, alpha):
    """Return ``(total, recon, mask)`` with ``total = recon + alpha * mask``."""
    recon = mse_loss(x_hat, x)
    mask = bce_loss(m_hat, m)
    return recon + alpha * mask, recon, mask


def make_encoder(d, rng, activation=Activation.RELU, dropout=0.0, n_layers=2):
    """Encoder of ``n_layers`` dense layers that keep the input width."""
    return DenseNetwork.build([d] * (n_layers + 1), rng, activation, dropout)


def make_head(h, out, rng, activation=Activation.IDENTITY):
    return DenseNetwork([DenseLayer.init(h, out, rng, activation)], rng)


def pretrain(encoder, features, cfg: CorruptionConfig, epochs=30, batch_size=128, lr=1e-3,
             rng=None, weight_decay=0.01, mask_head=None, recon_head=None, history=None):
    """Jointly fit encoder and both pretext heads; returns the encoder.

    ``features`` is the training matrix (labels are never looked at).  The
    heads are built here unless provided and are thrown away afterwards.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    features = np.asarray(features, dtype=np.float64)
    d = features.shape[1]
    h = encoder.out_dim
    mask_head = mask_head or make_head(h, d, rng, Activation.SIGMOID)
    recon_head = recon_head or make_head(h, d, rng, Activation.IDENTITY)
    nets = (encoder, mask_head, recon_head)
    for net in nets:
        net.train()
    opt = AdamW(
        encoder.parameters() + mask_head.parameters() + recon_head.parameters(),
        lr=lr, weight_decay=weight_decay,
    )
    n_enc = len(encoder.parameters())
    n_mask = len(mask_head.parameters())

    for epoch in range(epochs):
        perm = rng.permutation(features.shape[0])
        totals = []
        for start in range(0, perm.size, batch_size):
            x = features[perm[start:start + batch_size]]
            cb = corrupt(x, features, cfg.p_m, rng)
            z = encoder.forward(cb.x_tilde)
            m_hat = mask_head.forward(z)
            x_hat = recon_head.forward(z)
            total, recon, mask = vime_loss(cb.x, cb.mask, x_hat, m_hat, cfg.alpha)
            if not np.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite pretraining loss at epoch {epoch} "
                    f"(recon={recon}, mask={mask})"
                )
            g_mask, dz_mask = mask_head.backward(cfg.alpha * bce_loss_grad(m_hat, cb.mask))
            g_recon, dz_recon = recon_head.backward(mse_loss_grad(x_hat, cb.x))
            g_enc, _ = encoder.backward(dz_mask + dz_recon)
            grads = g_enc + g_mask + g_recon
            assert len(grads) == n_enc + n_mask + len(recon_head.parameters())
            opt.step(grads)
            totals.append(total)
        mean_loss = float(np.mean(totals))
        log.debug("ssl epoch %d loss %.5f", epoch, mean_loss)
        if history is not None:
            history.append({"stage": "ssl", "epoch": epoch, "loss": mean_loss})
    return encoder
