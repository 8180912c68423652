"""Novel class discovery on tabular data.

Self-supervised encoder initialisation followed by joint training of a
known-class classifier and a clustering head on pairwise pseudo labels.
"""

from .config import ExperimentConfig, load as load_config
from .data import SplitConfig, TabularDataset, load_csv, preprocess
from .joint import Ablation, JointConfig, JointModel, predict_clusters, run_training
from .metrics import EvalReport, ari, clustering_accuracy, evaluate, nmi

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "EvalReport",
    "ExperimentConfig",
    "JointConfig",
    "JointModel",
    "SplitConfig",
    "TabularDataset",
    "ari",
    "clustering_accuracy",
    "evaluate",
    "load_config",
    "load_csv",
    "nmi",
    "predict_clusters",
    "preprocess",
    "run_training",
]
