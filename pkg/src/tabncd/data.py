"""CSV ingestion, preprocessing and the known/unknown split protocol."""

from __future__ import annotations

import csv
import gzip
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class IngestionError(ValueError):
    """A CSV cell could not be read under the declared schema."""


class SplitError(ValueError):
    """The requested split cannot be built from the data."""


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass
class ColumnSpec:
    name: str
    kind: ColumnKind = ColumnKind.NUMERIC
    categories: list | None = None
    mean: float | None = None
    std: float | None = None

    def __post_init__(self):
        self.kind = ColumnKind(self.kind)

    def feature_names(self):
        """Names of the preprocessed columns this spec expands to."""
        if self.kind is ColumnKind.NUMERIC:
            return [self.name]
        return [f"{self.name}={c}" for c in self.categories or []]


@dataclass
class RawTable:
    columns: list  # ColumnSpec, label excluded
    cells: dict  # column name -> list of parsed values
    labels: list  # raw label strings, row order preserved
    source: str = ""

    @property
    def n_rows(self):
        return len(self.labels)


@dataclass
class SplitConfig:
    unknown_classes: list | None = None  # raw label values
    unknown_fraction: float = 0.5
    train_fraction: float = 0.7
    seed: int = 0
    drop_constant: bool = True
    train_rows: int | None = None  # predefined split: the first rows are the training set

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise SplitError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.unknown_classes is None and not 0.0 < self.unknown_fraction < 1.0:
            raise SplitError(f"unknown_fraction must be in (0, 1), got {self.unknown_fraction}")
        if self.train_rows is not None and self.train_rows < 1:
            raise SplitError(f"train_rows must be positive, got {self.train_rows}")


@dataclass(frozen=True)
class TabularDataset:
    """Preprocessed data with labelled/unlabelled and train/test masks.

    ``labels`` are remapped so that known classes occupy ``[0, n_known)`` and
    unknown classes ``[n_known, n_known + n_unknown)``.
    """

    features: np.ndarray
    labels: np.ndarray
    is_train: np.ndarray
    is_labelled: np.ndarray
    known_classes: tuple
    unknown_classes: tuple
    column_specs: tuple
    class_names: tuple = field(default=())
    name: str = ""

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_known(self):
        return len(self.known_classes)

    @property
    def n_unknown(self):
        return len(self.unknown_classes)

    def subset(self, train, labelled):
        """Row indices for a train/test × labelled/unlabelled cell."""
        mask = (self.is_train == train) & (self.is_labelled == labelled)
        return np.flatnonzero(mask)

    @property
    def train_idx(self):
        return np.flatnonzero(self.is_train)

    def unknown_targets(self, idx):
        """Labels of unknown-class rows shifted into ``[0, n_unknown)``."""
        return self.labels[idx] - self.n_known


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def load_csv(path, schema=None, label_column="class"):
    """Read a header-row CSV into a :class:`RawTable`.

    ``schema`` lists the feature columns; when omitted every non-label
    column is numeric.  Categorical columns with declared categories reject
    unseen values; undeclared ones collect categories in order of first
    appearance.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = list(reader)
    if label_column not in header:
        raise IngestionError(f"{path}: label column {label_column!r} not in header")
    if schema is None:
        schema = [ColumnSpec(h) for h in header if h != label_column]
    specs = [ColumnSpec(s.name, s.kind, list(s.categories) if s.categories else None)
             for s in schema]
    names = {s.name for s in specs}
    missing = names - set(header)
    if missing:
        raise IngestionError(f"{path}: schema columns absent from header: {sorted(missing)}")
    extra = set(header) - names - {label_column}
    if extra:
        raise IngestionError(f"{path}: columns not covered by schema: {sorted(extra)}")

    pos = {h: i for i, h in enumerate(header)}
    label_pos = pos[label_column]
    cells = {s.name: [] for s in specs}
    labels = []
    declared = {s.name: s.categories is not None for s in specs}
    for r, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestionError(f"{path}:{r}: expected {len(header)} cells, got {len(row)}")
        for spec in specs:
            raw = row[pos[spec.name]].strip()
            if raw == "":
                raise IngestionError(f"{path}:{r}: missing value in column {spec.name!r}")
            if spec.kind is ColumnKind.NUMERIC:
                try:
                    value = float(raw)
                except ValueError:
                    raise IngestionError(
                        f"{path}:{r}: column {spec.name!r}: cannot parse {raw!r} as a number"
                    ) from None
                if not math.isfinite(value):
                    raise IngestionError(f"{path}:{r}: column {spec.name!r}: non-finite {raw!r}")
            else:
                if spec.categories is None:
                    spec.categories = []
                if raw not in spec.categories:
                    if declared[spec.name]:
                        raise IngestionError(
                            f"{path}:{r}: column {spec.name!r}: unknown category {raw!r}"
                        )
                    spec.categories.append(raw)
                value = raw
            cells[spec.name].append(value)
        label = row[label_pos].strip()
        if label == "":
            raise IngestionError(f"{path}:{r}: missing label")
        labels.append(label)
    return RawTable(specs, cells, labels, str(path))


def _sort_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def _choose_unknown(classes, split):
    if split.unknown_classes is not None:
        wanted = [str(c) for c in split.unknown_classes]
        absent = [c for c in wanted if c not in classes]
        if absent:
            raise SplitError(f"unknown classes not present in data: {absent}")
        unknown = [c for c in classes if c in wanted]
    else:
        n_unknown = math.ceil(len(classes) * split.unknown_fraction)
        unknown = classes[len(classes) - n_unknown:]
    known = [c for c in classes if c not in unknown]
    if len(known) < 2 or len(unknown) < 2:
        raise SplitError(
            f"need at least 2 known and 2 unknown classes, got {len(known)} / {len(unknown)}"
        )
    return known, unknown


def _train_mask(labels, train_fraction, rng):
    """Class-stratified random train/test assignment."""
    n = labels.shape[0]
    is_train = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise SplitError(f"class {c} has fewer than 2 rows")
        idx = rng.permutation(idx)
        n_train = int(round(train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        is_train[idx[:n_train]] = True
    return is_train


def preprocess(raw: RawTable, split: SplitConfig, name=""):
    """Standardize numeric columns, one-hot categoricals and assign the split.

    Statistics are fitted on training rows only, using the population
    standard deviation.
    """
    split.validate()
    classes = sorted(set(raw.labels), key=_sort_key)
    known, unknown = _choose_unknown(classes, split)
    order = known + unknown
    remap = {c: i for i, c in enumerate(order)}
    labels = np.array([remap[c] for c in raw.labels], dtype=np.int64)

    if split.train_rows is not None:
        if split.train_rows >= labels.size:
            raise SplitError(f"train_rows={split.train_rows} leaves no test rows (n={labels.size})")
        is_train = np.arange(labels.size) < split.train_rows
    else:
        rng = np.random.default_rng(split.seed)
        is_train = _train_mask(labels, split.train_fraction, rng)
    is_labelled = labels < len(known)

    blocks, specs = [], []
    for spec in raw.columns:
        values = raw.cells[spec.name]
        if spec.kind is ColumnKind.NUMERIC:
            col = np.asarray(values, dtype=np.float64)
            mean = float(col[is_train].mean())
            std = float(col[is_train].std())
            if std <= 1e-12:
                if split.drop_constant:
                    log.warning("dropping constant numeric column %r", spec.name)
                    continue
                std = 1.0
            blocks.append(((col - mean) / std)[:, None])
            specs.append(ColumnSpec(spec.name, ColumnKind.NUMERIC, None, mean, std))
        else:
            cats = list(spec.categories)
            lookup = {c: i for i, c in enumerate(cats)}
            block = np.zeros((len(values), len(cats)))
            block[np.arange(len(values)), [lookup[v] for v in values]] = 1.0
            blocks.append(block)
            specs.append(ColumnSpec(spec.name, ColumnKind.CATEGORICAL, cats))
    if not blocks:
        raise SplitError("no usable feature columns")
    features = np.hstack(blocks)
    features.setflags(write=False)
    labels.setflags(write=False)
    is_train.setflags(write=False)
    is_labelled.setflags(write=False)
    return TabularDataset(
        features=features,
        labels=labels,
        is_train=is_train,
        is_labelled=is_labelled,
        known_classes=tuple(range(len(known))),
        unknown_classes=tuple(range(len(known), len(order))),
        column_specs=tuple(specs),
        class_names=tuple(order),
        name=name,
    )


@dataclass
class Batch:
    index: np.ndarray  # dataset row ids
    labelled: np.ndarray  # positions within ``index``
    unlabelled: np.ndarray


def batch_sampler(ds: TabularDataset, batch_size, seed, rows=None):
    """Yield one epoch of shuffled mixed batches over the training rows."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    rows = ds.train_idx if rows is None else np.asarray(rows)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rows[rng.permutation(rows.size)]
    for start in range(0, perm.size, batch_size):
        index = perm[start:start + batch_size]
        lab = ds.is_labelled[index]
        yield Batch(index, np.flatnonzero(lab), np.flatnonzero(~lab))
