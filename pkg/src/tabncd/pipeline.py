"""Single-run orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .config import ExperimentConfig
from .joint import Ablation, JointModel, predict_clusters, run_training
from .metrics import EvalReport, evaluate
from .nn import Activation
from .ssl import CorruptionConfig, make_encoder, pretrain

log = logging.getLogger(__name__)


def run_seed(cfg: ExperimentConfig, run_index):
    return cfg.seed + run_index


def pretrain_encoder(cfg: ExperimentConfig, ds, seed, history=None):
    """Build an encoder shaped ``[d, d, d]`` and fit it on all training rows."""
    rng = np.random.default_rng(seed)
    enc = make_encoder(ds.n_features, rng, Activation(cfg.joint.activation), cfg.joint.dropout)
    corruption = CorruptionConfig(cfg.ssl.corruption.p_m, cfg.ssl.corruption.alpha, seed)
    pretrain(
        enc, ds.features[ds.train_idx], corruption,
        epochs=cfg.ssl.epochs, batch_size=cfg.ssl.batch_size, lr=cfg.ssl.lr,
        rng=rng, history=history,
    )
    return enc.eval()


@dataclass
class RunOutput:
    model: JointModel
    report: EvalReport
    encoder_ssl: object = None
    history: list = field(default_factory=list)


def run_tabularncd(cfg: ExperimentConfig, ds, seed, ablation=None, encoder=None, run_id=None):
    """SSL pretraining (unless ablated or supplied) then joint training."""
    ablation = ablation or Ablation()
    history = []
    if encoder is None and not ablation.ssl:
        encoder = pretrain_encoder(cfg, ds, seed, history)
    result = run_training(ds, cfg.joint, ablation, encoder, seed=seed)
    for entry in result.history:
        history.append({"stage": "joint", **entry})
    report = evaluate(
        lambda x: predict_clusters(result.model, x), ds, seed=seed, run_id=run_id,
        meta={"method": "tabularncd", "dataset": cfg.name, "ablate": ablation.names()},
    )
    return RunOutput(result.model, report, encoder, history)


def run_baseline(cfg: ExperimentConfig, ds, method, seed, encoder=None):
    """``method`` is ``kmeans``, ``classifier-probe`` or ``repr-probe:STAGE``."""
    n_init = cfg.baseline.n_init
    if method == "kmeans":
        rep = baselines.kmeans_report(ds, seed=seed, n_init=n_init,
                                      meta={"method": "kmeans"})
    elif method == "classifier-probe":
        probe = baselines.ProbeConfig(
            epochs=cfg.baseline.epochs,
            batch_size=cfg.joint.batch_size,
            lr=cfg.baseline.lr or cfg.joint.lr_classif,
            dropout=cfg.joint.dropout,
            activation=cfg.joint.activation,
            weight_decay=cfg.joint.weight_decay,
        )
        rep = baselines.baseline_classifier_probe(ds, probe, seed=seed, n_init=n_init)
    elif method.startswith("repr-probe:"):
        stage = method.split(":", 1)[1]
        rep = baselines.representation_probe(ds, stage, encoder, seed=seed, n_init=n_init)
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    rep.meta["dataset"] = cfg.name
    return rep


def aggregate(reports):
    """Mean and population std of each metric across runs."""
    out = {"runs": len(reports)}
    for key in ("bacc", "acc", "nmi", "ari"):
        vals = np.array([getattr(r, key) for r in reports])
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_std"] = float(vals.std())
    return out


def format_row(agg):
    """Render an aggregate like the result tables (percent for ACC/BACC)."""
    return {
        "BACC": f"{100 * agg['bacc_mean']:.1f}±{100 * agg['bacc_std']:.1f}",
        "ACC": f"{100 * agg['acc_mean']:.1f}±{100 * agg['acc_std']:.1f}",
        "NMI": f"{agg['nmi_mean']:.2f}±{agg['nmi_std']:.2f}",
        "ARI": f"{agg['ari_mean']:.2f}±{agg['ari_std']:.2f}",
    }


def probe_encoder(cfg: ExperimentConfig, ds, stage, seed, encoder=None):
    """Encoder for a representation probe, trained on the fly if not given."""
    if stage == "raw" or encoder is not None:
        return encoder
    if stage == "ssl":
        return pretrain_encoder(cfg, ds, seed)
    if stage == "joint":
        return run_tabularncd(cfg, ds, seed).model.encoder
    raise ValueError(f"unknown stage {stage!r}")


def joint_model_from(networks, meta):
    """Rebuild a :class:`JointModel` from checkpoint contents."""
    missing = {"encoder", "classif_head", "cluster_head"} - set(networks)
    if missing:
        raise ValueError(f"checkpoint lacks {sorted(missing)}; is it an encoder-only file?")
    return JointModel(
        encoder=networks["encoder"],
        classif_head=networks["classif_head"],
        cluster_head=networks["cluster_head"],
        n_known=int(meta["n_known"]),
        n_unknown=int(meta["n_unknown"]),
    )
