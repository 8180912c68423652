"""Command line entry point.

Every subcommand takes ``--config`` (a JSON file or a bundled preset name),
validates it before doing any work and writes its artefacts under ``--out``
(defaulting to the config's ``output_dir``).  Run ``i`` of a multi-run
command uses seed ``seed + i``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, checkpoint, pipeline
from .config import ConfigError, ExperimentConfig
from .config import load as load_config
from .data import IngestionError, SplitError
from .joint import ABLATIONS, Ablation, predict_clusters
from .metrics import evaluate

log = logging.getLogger("tabncd")

STAGES = ("raw", "ssl", "joint")
SENSITIVITY_PARAMS = {"topk": "topk_percent", "k_neighbors": "k_neighbors", "w1": "w1", "w2": "w2"}


class UsageError(Exception):
    """Bad command line input; reported with exit code 2."""


# -- argument types --------------------------------------------------------------


def _method(value):
    if value in ("kmeans", "classifier-probe"):
        return value
    if value.startswith("repr-probe:") and value.split(":", 1)[1] in STAGES:
        return value
    raise argparse.ArgumentTypeError(
        f"unknown method {value!r}; use kmeans, classifier-probe or repr-probe:{{{','.join(STAGES)}}}"
    )


def _ablations(value):
    items = [v for v in value.split(",") if v.strip()]
    try:
        Ablation.parse(items)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return items


def _grid(value):
    try:
        vals = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {value!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("grid is empty")
    return vals


# -- helpers ---------------------------------------------------------------------


def _setup(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "runs", None) is not None:
        if args.runs < 1:
            raise UsageError("--runs must be at least 1")
        cfg.runs = args.runs
    out = Path(args.out) if getattr(args, "out", None) else cfg.output_dir
    return cfg, out


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path, rows, fields):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _report_row(rep, **extra):
    row = {"run_id": rep.run_id, "seed": rep.seed, "bacc": rep.bacc, "acc": rep.acc,
           "nmi": rep.nmi, "ari": rep.ari}
    row.update(extra)
    return row


REPORT_FIELDS = ["run_id", "seed", "bacc", "acc", "nmi", "ari"]


def _summarise(reports, out, label):
    agg = pipeline.aggregate(reports)
    agg["table"] = pipeline.format_row(agg)
    _write_json(out / "aggregate.json", agg)
    _write_csv(out / "runs.csv", [_report_row(r) for r in reports], REPORT_FIELDS)
    t = agg["table"]
    print(f"{label}: BACC {t['BACC']}  ACC {t['ACC']}  NMI {t['NMI']}  ARI {t['ARI']}  "
          f"({len(reports)} runs)")
    return agg


def _encoder_from(path):
    nets, meta = checkpoint.load(path)
    if "encoder" not in nets:
        raise UsageError(f"{path}: no encoder in checkpoint")
    return nets["encoder"], meta


def _joint_meta(cfg: ExperimentConfig, ds, seed, ablation):
    return {"kind": "joint", "dataset": cfg.name, "seed": seed, "n_known": ds.n_known,
            "n_unknown": ds.n_unknown, "ablate": ablation.names()}


# -- subcommands -------------------------------------------------------------------


def cmd_pretrain(args):
    cfg, out = _setup(args)
    ds = cfg.load_dataset()
    history = []
    enc = pipeline.pretrain_encoder(cfg, ds, cfg.seed, history)
    path = checkpoint.save(out / "encoder.npz", {"encoder": enc},
                           {"kind": "encoder", "dataset": cfg.name, "seed": cfg.seed})
    _write_jsonl(out / "ssl_history.jsonl", [{"stage": "ssl", **h} for h in history])
    dims = [enc.in_dim] + [layer.fan_out for layer in enc.layers]
    print(f"encoder {dims} written to {path}")
    return 0


def cmd_train(args):
    cfg, out = _setup(args)
    ablation = Ablation.parse(args.ablate or [])
    ds = cfg.load_dataset()
    shared = _encoder_from(args.checkpoint)[0] if args.checkpoint else None
    reports = []
    for i in range(cfg.runs):
        seed = pipeline.run_seed(cfg, i)
        run_id = f"run_{i:02d}"
        res = pipeline.run_tabularncd(cfg, ds, seed, ablation, encoder=shared, run_id=run_id)
        run_dir = out / run_id
        _write_json(run_dir / "report.json", res.report.to_dict())
        _write_jsonl(run_dir / "history.jsonl", res.history)
        checkpoint.save(run_dir / "model.npz", res.model.networks(),
                        _joint_meta(cfg, ds, seed, ablation))
        if res.encoder_ssl is not None and shared is None:
            checkpoint.save(run_dir / "encoder_ssl.npz", {"encoder": res.encoder_ssl},
                            {"kind": "encoder", "dataset": cfg.name, "seed": seed})
        log.info("%s seed %d: BACC %.4f ACC %.4f", run_id, seed, res.report.bacc, res.report.acc)
        reports.append(res.report)
    label = "tabularncd" + "".join(f" w/o {a}" for a in ablation.names())
    _summarise(reports, out, f"{cfg.name} {label}")
    return 0


def cmd_baseline(args):
    cfg, out = _setup(args)
    ds = cfg.load_dataset()
    method = args.method
    encoder = _encoder_from(args.checkpoint)[0] if args.checkpoint else None
    reports = []
    for i in range(cfg.runs):
        seed = pipeline.run_seed(cfg, i)
        enc = encoder
        if method.startswith("repr-probe:"):
            enc = pipeline.probe_encoder(cfg, ds, method.split(":", 1)[1], seed, encoder)
        rep = pipeline.run_baseline(cfg, ds, method, seed, enc)
        rep.run_id = f"run_{i:02d}"
        _write_json(out / method.replace(":", "_") / f"{rep.run_id}.json", rep.to_dict())
        reports.append(rep)
    _summarise(reports, out / method.replace(":", "_"), f"{cfg.name} {method}")
    return 0


def cmd_eval(args):
    cfg, out = _setup(args)
    ds = cfg.load_dataset()
    nets, meta = checkpoint.load(args.checkpoint)
    try:
        model = pipeline.joint_model_from(nets, meta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if (model.n_known, model.n_unknown) != (ds.n_known, ds.n_unknown):
        raise UsageError(
            f"checkpoint has {model.n_known}/{model.n_unknown} known/unknown classes, "
            f"dataset has {ds.n_known}/{ds.n_unknown}"
        )
    rep = evaluate(lambda x: predict_clusters(model, x), ds, seed=meta.get("seed"),
                   run_id=Path(args.checkpoint).stem,
                   meta={"method": "tabularncd", "dataset": cfg.name, "checkpoint": str(args.checkpoint)})
    _write_json(out / "eval_report.json", rep.to_dict())
    print(rep.to_json())
    return 0


def cmd_export_embeddings(args):
    cfg, _ = _setup(args)
    ds = cfg.load_dataset()
    encoder, _ = _encoder_from(args.checkpoint)
    if encoder.in_dim != ds.n_features:
        raise UsageError(f"encoder expects {encoder.in_dim} features, dataset has {ds.n_features}")
    z = encoder.eval().forward(ds.features)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = [f"z{j}" for j in range(z.shape[1])] + ["label", "labelled"]
    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, y, lab in zip(z, ds.labels, ds.is_labelled):
            writer.writerow([repr(float(v)) for v in row] + [int(y), int(lab)])
    print(f"{z.shape[0]} rows x {len(header)} columns written to {out}")
    return 0


def cmd_sensitivity(args):
    cfg, out = _setup(args)
    ds = cfg.load_dataset()
    field = SENSITIVITY_PARAMS[args.param]
    rows = []
    for value in args.grid:
        value = int(value) if field == "k_neighbors" else value
        try:
            swept = cfg.with_joint(**{field: value})
        except (ConfigError, ValueError) as exc:
            raise UsageError(f"{args.param}={value}: {exc}") from None
        swept.seed, swept.runs = cfg.seed, cfg.runs
        reports = [pipeline.run_tabularncd(swept, ds, pipeline.run_seed(swept, i)).report
                   for i in range(swept.runs)]
        agg = pipeline.aggregate(reports)
        rows.append({"param": args.param, "value": value, **agg})
        print(f"{args.param}={value}: BACC {100 * agg['bacc_mean']:.1f}  ACC {100 * agg['acc_mean']:.1f}")
    fields = ["param", "value", "runs"] + [f"{m}_{s}" for m in ("bacc", "acc", "nmi", "ari")
                                          for s in ("mean", "std")]
    _write_csv(out / f"sensitivity_{args.param}.csv", rows, fields)
    return 0


def cmd_feature_importance(args):
    """Diagnostic: reads the ground truth of every training row."""
    cfg, out = _setup(args)
    ds = cfg.load_dataset()
    names, coef = baselines.logistic_feature_importance(ds)
    features = [n for c in ds.column_specs for n in c.feature_names()]
    rows = []
    for cls, w in zip(names, coef):
        status = "unknown" if cls in [ds.class_names[c] for c in ds.unknown_classes] else "known"
        top = np.argsort(-np.abs(w), kind="stable")[: args.top]
        rows.append({"class": cls, "status": status,
                     "top_features": ";".join(f"{features[j]}:{w[j]:.4f}" for j in top)})
    _write_csv(out / "feature_importance.csv", rows, ["class", "status", "top_features"])
    np.savetxt(out / "feature_importance_coef.csv", coef, delimiter=",",
               header=",".join(features), comments="")
    for r in rows:
        print(f"{r['class']} ({r['status']}): {r['top_features']}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="tabncd", description="Novel class discovery for tabular data.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs=True):
        sp.add_argument("--config", required=True, help="config file or bundled preset name")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory (default: config output_dir)")
        if runs:
            sp.add_argument("--runs", type=int, help="number of seeds (run i uses seed + i)")

    sp = sub.add_parser("pretrain", help="self-supervised encoder initialisation")
    common(sp, runs=False)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("train", help="pretraining plus joint training, one report per run")
    common(sp)
    sp.add_argument("--ablate", type=_ablations, default=[],
                    help=f"comma-separated components to remove: {','.join(ABLATIONS)}")
    sp.add_argument("--checkpoint", help="reuse this pretrained encoder for every run")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("baseline", help="k-means, classifier probe or representation probes")
    common(sp)
    sp.add_argument("--method", type=_method, required=True,
                    help="kmeans | classifier-probe | repr-probe:raw|ssl|joint")
    sp.add_argument("--checkpoint", help="encoder for repr-probe:ssl|joint (trained if omitted)")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("eval", help="score a saved joint model on the unlabelled test rows")
    common(sp, runs=False)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export-embeddings", help="latent vectors of every row as CSV")
    sp.add_argument("--config", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True, help="output CSV file")
    sp.set_defaults(func=cmd_export_embeddings)

    sp = sub.add_parser("sensitivity", help="sweep one joint-training hyperparameter")
    common(sp)
    sp.add_argument("--param", choices=sorted(SENSITIVITY_PARAMS), required=True)
    sp.add_argument("--grid", type=_grid, required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("feature-importance",
                        help="diagnostic logistic regression coefficients (reads all train labels)")
    common(sp, runs=False)
    sp.add_argument("--top", type=int, default=5)
    sp.set_defaults(func=cmd_feature_importance)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"tabncd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, SplitError, checkpoint.CheckpointError, FileNotFoundError) as exc:
        print(f"tabncd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
