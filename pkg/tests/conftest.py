import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def blob_table(n_classes=6, per_class=60, d=5, spread=0.35, seed=0):
    """Well separated Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(scale=4.0, size=(n_classes, d))
    x = np.vstack([c + spread * rng.normal(size=(per_class, d)) for c in centres])
    y = np.repeat(np.arange(n_classes), per_class)
    return x, y


def write_csv(path, x, y, label="target", extra=None):
    names = [f"f{j}" for j in range(x.shape[1])]
    lines = [",".join(names + list(extra or {}) + [label])]
    for i, (row, lab) in enumerate(zip(x, y)):
        cells = [repr(float(v)) for v in row]
        cells += [str(col[i]) for col in (extra or {}).values()]
        lines.append(",".join(cells + [str(lab)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def blob_csv(tmp_path):
    x, y = blob_table()
    return write_csv(tmp_path / "blobs.csv", x, y)


@pytest.fixture
def blob_dataset(blob_csv):
    from tabncd.data import SplitConfig, load_csv, preprocess

    raw = load_csv(blob_csv, label_column="target")
    return preprocess(raw, SplitConfig(seed=0), name="blobs")


@pytest.fixture
def blob_config(tmp_path, blob_csv):
    """A small, fast experiment config on the blob data."""
    return {
        "name": "blobs",
        "seed": 0,
        "runs": 2,
        "output_dir": str(tmp_path / "runs"),
        "dataset": {"path": str(blob_csv), "label_column": "target", "split": {"seed": 0}},
        "ssl": {"epochs": 3, "batch_size": 64},
        "joint": {"epochs": 3, "batch_size": 128, "topk_percent": 10, "k_neighbors": 3,
                  "w1": 0.8, "w2": 0.8, "lr_classif": 0.005, "lr_cluster": 0.005},
        "baseline": {"epochs": 3, "n_init": 2},
    }


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
