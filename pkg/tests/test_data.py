import logging

import numpy as np
import pytest

from conftest import blob_table, write_csv
from tabncd import config
from tabncd.data import (
    ColumnKind,
    ColumnSpec,
    IngestionError,
    SplitConfig,
    SplitError,
    batch_sampler,
    load_csv,
    preprocess,
)


def _cells(ds):
    return [ds.subset(t, l).size for t in (True, False) for l in (True, False)]


def test_partition_covers_every_row(blob_dataset):
    ds = blob_dataset
    assert sum(_cells(ds)) == ds.features.shape[0]


def test_known_and_unknown_disjoint_and_masks_agree(blob_dataset):
    ds = blob_dataset
    assert not set(ds.known_classes) & set(ds.unknown_classes)
    assert np.array_equal(ds.is_labelled, np.isin(ds.labels, ds.known_classes))
    # known ids first, unknown ids after
    assert ds.known_classes == tuple(range(ds.n_known))
    assert ds.unknown_classes == tuple(range(ds.n_known, ds.n_known + ds.n_unknown))


def test_default_unknown_classes_are_highest_ids(blob_dataset):
    assert blob_dataset.class_names[blob_dataset.n_known:] == ("3", "4", "5")


def test_standardized_with_train_statistics(blob_dataset):
    x = blob_dataset.features[blob_dataset.is_train]
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(x.std(axis=0), 1.0, atol=1e-6)


def test_test_rows_do_not_leak_into_statistics(tmp_path):
    x, y = blob_table()
    raw = load_csv(write_csv(tmp_path / "a.csv", x, y), label_column="target")
    ds = preprocess(raw, SplitConfig(seed=3))
    x2 = x.copy()
    x2[~ds.is_train] += 1000.0
    ds2 = preprocess(load_csv(write_csv(tmp_path / "b.csv", x2, y), label_column="target"),
                     SplitConfig(seed=3))
    for a, b in zip(ds.column_specs, ds2.column_specs):
        assert (a.mean, a.std) == (b.mean, b.std)
    np.testing.assert_array_equal(ds.features[ds.is_train], ds2.features[ds2.is_train])


def test_preprocess_is_deterministic(blob_csv):
    raw = load_csv(blob_csv, label_column="target")
    a = preprocess(raw, SplitConfig(seed=5))
    b = preprocess(raw, SplitConfig(seed=5))
    c = preprocess(raw, SplitConfig(seed=6))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.is_train, b.is_train)
    assert not np.array_equal(a.is_train, c.is_train)


def test_train_fraction_is_stratified(blob_dataset):
    ds = blob_dataset
    for c in range(6):
        rows = ds.labels == c
        assert ds.is_train[rows].sum() == 42  # round(0.7 * 60)


def test_predefined_split_by_row_count(blob_csv):
    raw = load_csv(blob_csv, label_column="target")
    ds = preprocess(raw, SplitConfig(train_rows=100))
    assert ds.is_train[:100].all() and not ds.is_train[100:].any()
    with pytest.raises(SplitError):
        preprocess(raw, SplitConfig(train_rows=raw.n_rows))


def test_explicit_unknown_classes(blob_csv):
    raw = load_csv(blob_csv, label_column="target")
    ds = preprocess(raw, SplitConfig(unknown_classes=["0", "2"]))
    assert ds.class_names == ("1", "3", "4", "5", "0", "2")
    with pytest.raises(SplitError):
        preprocess(raw, SplitConfig(unknown_classes=["0", "9"]))


@pytest.mark.parametrize("unknown", [["0"], ["0", "1", "2", "3", "4"]])
def test_needs_two_known_and_two_unknown(blob_csv, unknown):
    raw = load_csv(blob_csv, label_column="target")
    with pytest.raises(SplitError):
        preprocess(raw, SplitConfig(unknown_classes=unknown))


def test_class_with_one_row_is_rejected(tmp_path):
    x, y = blob_table(n_classes=4, per_class=10)
    y = y.copy()
    y[0] = 99
    raw = load_csv(write_csv(tmp_path / "a.csv", x, y), label_column="target")
    with pytest.raises(SplitError, match="fewer than 2"):
        preprocess(raw, SplitConfig())


def test_constant_column_dropped_with_warning(tmp_path, caplog):
    x, y = blob_table()
    x[:, 2] = 7.0
    raw = load_csv(write_csv(tmp_path / "a.csv", x, y), label_column="target")
    with caplog.at_level(logging.WARNING):
        ds = preprocess(raw, SplitConfig())
    assert ds.n_features == 4
    assert "constant" in caplog.text
    kept = preprocess(raw, SplitConfig(drop_constant=False))
    assert kept.n_features == 5
    assert np.all(kept.features[:, 2] == 0.0)


def test_categorical_columns_one_hot(tmp_path):
    x, y = blob_table(n_classes=4, per_class=10, d=2)
    colour = ["red", "green", "blue", "green"] * 10
    path = write_csv(tmp_path / "a.csv", x, y, extra={"colour": colour})
    schema = [ColumnSpec("f0"), ColumnSpec("f1"), ColumnSpec("colour", ColumnKind.CATEGORICAL)]
    ds = preprocess(load_csv(path, schema, "target"), SplitConfig())
    assert ds.n_features == 2 + 3
    block = ds.features[:, 2:]
    assert np.array_equal(block.sum(axis=1), np.ones(40))
    assert ds.column_specs[2].categories == ["red", "green", "blue"]
    assert ds.column_specs[2].feature_names() == ["colour=red", "colour=green", "colour=blue"]


def test_declared_categories_reject_unknown_values(tmp_path):
    x, y = blob_table(n_classes=4, per_class=10, d=1)
    path = write_csv(tmp_path / "a.csv", x, y, extra={"c": ["a", "b"] * 20})
    schema = [ColumnSpec("f0"), ColumnSpec("c", ColumnKind.CATEGORICAL, ["a"])]
    with pytest.raises(IngestionError, match=r":3: column 'c': unknown category 'b'"):
        load_csv(path, schema, "target")


def test_ingestion_errors_carry_location(tmp_path):
    with pytest.raises(IngestionError, match="not found"):
        load_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,class\n1,2,x\n3,oops,y\n", encoding="utf-8")
    with pytest.raises(IngestionError, match=r"bad.csv:3: column 'b': cannot parse 'oops'"):
        load_csv(bad)
    gap = tmp_path / "gap.csv"
    gap.write_text("a,class\n1,x\n,y\n", encoding="utf-8")
    with pytest.raises(IngestionError, match=r":3: missing value in column 'a'"):
        load_csv(gap)
    with pytest.raises(IngestionError, match="label column"):
        load_csv(bad, label_column="nope")


def test_dataset_arrays_are_read_only(blob_dataset):
    with pytest.raises(ValueError):
        blob_dataset.features[0, 0] = 1.0


def test_batch_sampler_covers_each_train_row_once(blob_dataset):
    ds = blob_dataset
    seen = []
    for batch in batch_sampler(ds, 37, seed=1):
        assert batch.index.size <= 37
        assert np.array_equal(ds.is_labelled[batch.index[batch.labelled]],
                              np.ones(batch.labelled.size, bool))
        assert not ds.is_labelled[batch.index[batch.unlabelled]].any()
        seen.extend(batch.index)
    assert sorted(seen) == sorted(ds.train_idx)


def test_bundled_pendigits_has_16_attributes():
    raw = load_csv(config.load("pendigits").dataset_path, label_column="class")
    assert len(raw.columns) == 16
    assert raw.n_rows == 10992


@pytest.mark.parametrize("name, d, classes", [
    ("satimage", 36, 6), ("pendigits", 16, 10), ("letter", 16, 26), ("mnist5k", 784, 10),
])
def test_bundled_presets_load(name, d, classes):
    ds = config.load(name).load_dataset()
    assert ds.n_features == d
    assert ds.n_known + ds.n_unknown == classes
