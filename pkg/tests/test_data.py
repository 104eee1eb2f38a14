import numpy as np
import pytest

from vqclab.data import (
    DatasetManifestEntry,
    load_dataset,
    load_manifest,
    make_folds,
    preprocess,
    standardize_fold,
)
from vqclab.errors import DatasetError, ValidationError

from conftest import DATA_DIR

TOY_CSV = """a,b,color,const,label
1.0,2.0,red,5,yes
2.0,3.5,blue,5,no
3.0,1.0,red,5,yes
4.0,2.5,green,5,no
,9.0,red,5,yes
5.0,4.0,blue,5,yes
6.0,0.5,green,5,no
7.0,3.0,red,5,yes
"""

TOY_ARFF = """% toy nominal file
@RELATION toy
@ATTRIBUTE a NUMERIC
@ATTRIBUTE color {red,blue}
@ATTRIBUTE class {yes,no}
@DATA
1.0,red,yes
2.0,blue,no
?,red,yes
3.0,blue,yes
4.0,red,no
"""


def toy_entry(path, categorical=("color",)):
    return DatasetManifestEntry(
        name="toy",
        path=str(path),
        label_column="label",
        positive_label="yes",
        categorical_columns=list(categorical),
    )


@pytest.fixture
def toy_csv(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text(TOY_CSV)
    return p


@pytest.fixture
def toy_arff(tmp_path):
    p = tmp_path / "toy.arff"
    p.write_text(TOY_ARFF)
    return p


class TestLoad:
    def test_csv(self, toy_csv):
        table = load_dataset(toy_csv, toy_entry(toy_csv))
        assert table.columns == ["a", "b", "color", "const", "label"]
        assert len(table.rows) == 8
        assert table.rows[4][0] is None  # missing cell

    def test_arff(self, toy_arff):
        entry = DatasetManifestEntry(
            name="toy",
            path=str(toy_arff),
            label_column="class",
            positive_label="yes",
            categorical_columns=["color"],
        )
        table = load_dataset(toy_arff, entry)
        assert table.columns == ["a", "color", "class"]
        assert len(table.rows) == 5
        assert table.rows[2][0] is None

    def test_arff_nominal_becomes_categorical(self, toy_arff):
        # no manifest declaration needed: the ARFF type drives the one-hot
        entry = DatasetManifestEntry(
            name="toy", path=str(toy_arff), label_column="class", positive_label="yes"
        )
        table = load_dataset(toy_arff, entry)
        assert set(table.nominal_columns) == {"color", "class"}
        ds = preprocess(table, entry)
        assert "color=red" in ds.feature_names

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(DatasetError):
            load_dataset(p, toy_entry(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nope.csv", toy_entry(tmp_path / "nope.csv"))

    def test_unknown_manifest_column(self, toy_csv):
        entry = toy_entry(toy_csv, categorical=("shape",))
        with pytest.raises(DatasetError):
            load_dataset(toy_csv, entry)

    def test_bundled_blobs4(self):
        entry = DatasetManifestEntry(
            name="blobs4",
            path=str(DATA_DIR / "blobs4.csv"),
            label_column="class",
            positive_label="1",
        )
        ds = preprocess(load_dataset(entry.path, entry), entry)
        assert ds.num_features == 4
        assert ds.num_instances == 520


class TestPreprocess:
    def test_missing_rows_dropped(self, toy_csv):
        entry = toy_entry(toy_csv)
        ds = preprocess(load_dataset(toy_csv, entry), entry)
        assert ds.num_instances == 7

    def test_one_hot_and_constant_drop(self, toy_csv):
        entry = toy_entry(toy_csv)
        ds = preprocess(load_dataset(toy_csv, entry), entry)
        # a, b, three one-hot colors; const dropped
        assert ds.feature_names == ["a", "b", "color=blue", "color=green", "color=red"]
        onehot = ds.features[:, 2:]
        assert set(np.unique(onehot)) == {0.0, 1.0}
        np.testing.assert_allclose(onehot.sum(axis=1), 1.0)

    def test_two_value_categorical_gives_two_columns(self, tmp_path):
        p = tmp_path / "two.csv"
        p.write_text("c,x,label\na,1,yes\nb,2,no\na,3,yes\nb,4,no\n")
        entry = DatasetManifestEntry(
            name="two", path=str(p), label_column="label",
            positive_label="yes", categorical_columns=["c"],
        )
        ds = preprocess(load_dataset(p, entry), entry)
        assert ds.feature_names == ["c=a", "c=b", "x"]

    def test_label_mapping(self, toy_csv):
        entry = toy_entry(toy_csv)
        ds = preprocess(load_dataset(toy_csv, entry), entry)
        assert set(ds.labels.tolist()) == {0, 1}
        assert ds.labels.sum() == 4  # four complete "yes" rows

    def test_non_binary_label(self, tmp_path):
        p = tmp_path / "tri.csv"
        p.write_text("x,label\n1,a\n2,b\n3,c\n")
        entry = DatasetManifestEntry(
            name="tri", path=str(p), label_column="label", positive_label="a"
        )
        with pytest.raises(DatasetError):
            preprocess(load_dataset(p, entry), entry)

    def test_all_constant_features(self, tmp_path):
        p = tmp_path / "const.csv"
        p.write_text("x,label\n1,a\n1,b\n1,a\n")
        entry = DatasetManifestEntry(
            name="const", path=str(p), label_column="label", positive_label="a"
        )
        with pytest.raises(DatasetError):
            preprocess(load_dataset(p, entry), entry)

    def test_feature_cap(self, tmp_path):
        cols = [f"x{i}" for i in range(25)]
        header = ",".join(cols) + ",label"
        rows = [",".join(str(i + j) for j in range(25)) + (",a" if i % 2 else ",b") for i in range(6)]
        p = tmp_path / "wide.csv"
        p.write_text(header + "\n" + "\n".join(rows) + "\n")
        entry = DatasetManifestEntry(
            name="wide", path=str(p), label_column="label", positive_label="a"
        )
        with pytest.raises(DatasetError):
            preprocess(load_dataset(p, entry), entry)


class TestFolds:
    def _dataset(self, n0=50, n1=50, seed=0):
        r = np.random.default_rng(seed)
        from vqclab.data import Dataset

        X = r.normal(size=(n0 + n1, 3))
        y = np.array([0] * n0 + [1] * n1)
        perm = r.permutation(n0 + n1)
        return Dataset("t", X[perm], y[perm], ["a", "b", "c"])

    def test_even_split(self):
        ds = self._dataset()
        folds = make_folds(ds, k=10, seed=1)
        assert all(len(f.test_indices) == 10 for f in folds)

    def test_partition(self):
        ds = self._dataset(47, 61)
        folds = make_folds(ds, k=10, seed=2)
        all_test = np.concatenate([f.test_indices for f in folds])
        assert sorted(all_test.tolist()) == list(range(108))
        for f in folds:
            assert set(f.train_indices) & set(f.test_indices) == set()
            assert len(f.train_indices) + len(f.test_indices) == 108

    def test_stratification_balanced(self):
        ds = self._dataset(50, 50)
        for f in make_folds(ds, k=10, seed=3):
            labels = ds.labels[f.test_indices]
            assert (labels == 0).sum() == 5
            assert (labels == 1).sum() == 5

    def test_stratification_within_one(self):
        ds = self._dataset(53, 71)
        folds = make_folds(ds, k=10, seed=4)
        per_class = {0: 53, 1: 71}
        for f in folds:
            labels = ds.labels[f.test_indices]
            for cls, total in per_class.items():
                count = (labels == cls).sum()
                assert abs(count - total / 10) < 1.0

    def test_determinism(self):
        ds = self._dataset()
        a = make_folds(ds, k=5, seed=9)
        b = make_folds(ds, k=5, seed=9)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.test_indices, fb.test_indices)

    def test_small_class_rejected(self):
        ds = self._dataset(5, 95)
        with pytest.raises(ValidationError):
            make_folds(ds, k=10, seed=0)


class TestStandardization:
    def test_train_columns_standardized(self):
        ds = TestFolds()._dataset(40, 40, seed=5)
        split = make_folds(ds, k=4, seed=5)[0]
        X_train, _, X_test, _ = standardize_fold(ds, split)
        np.testing.assert_allclose(X_train.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(X_train.std(axis=0), 1.0, atol=1e-9)

    def test_no_leak_from_test_fold(self):
        # the applied shift must equal the train-row mean, not the global mean
        ds = TestFolds()._dataset(40, 40, seed=6)
        split = make_folds(ds, k=4, seed=6)[0]
        X_train, _, X_test, _ = standardize_fold(ds, split)
        mean = ds.features[split.train_indices].mean(axis=0)
        std = ds.features[split.train_indices].std(axis=0)
        np.testing.assert_allclose(
            X_test, (ds.features[split.test_indices] - mean) / std, atol=1e-12
        )
        global_mean = ds.features.mean(axis=0)
        assert not np.allclose(mean, global_mean, atol=1e-12)

    def test_population_variance_definition(self):
        col = np.array([1.0, 2.0, 3.0])
        mean = col.mean()
        sd = col.std()  # divide by N
        np.testing.assert_allclose(
            (col - mean) / sd, [-1.224744871391589, 0.0, 1.224744871391589]
        )


class TestManifest:
    def test_load_bundled_manifest(self):
        entries = load_manifest(DATA_DIR / "manifest.json")
        names = [e.name for e in entries]
        assert "blobs4" in names and "banknote-authentication" in names
        blobs = next(e for e in entries if e.name == "blobs4")
        assert blobs.path.endswith("blobs4.csv")

    def test_missing_field(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"datasets": [{"name": "x"}]}')
        with pytest.raises(DatasetError):
            load_manifest(p)

    @pytest.mark.skipif(
        not (DATA_DIR / "banknote-authentication.csv").exists(),
        reason="OpenML snapshot not fetched (run scripts/fetch_datasets.py)",
    )
    def test_banknote_snapshot_shape(self):
        entries = {e.name: e for e in load_manifest(DATA_DIR / "manifest.json")}
        e = entries["banknote-authentication"]
        ds = preprocess(load_dataset(e.path, e), e)
        assert ds.num_features == 4
        assert ds.num_instances == 1372

    @pytest.mark.skipif(
        not (DATA_DIR / "breast-w.csv").exists(),
        reason="OpenML snapshot not fetched (run scripts/fetch_datasets.py)",
    )
    def test_breast_w_snapshot_shape(self):
        entries = {e.name: e for e in load_manifest(DATA_DIR / "manifest.json")}
        e = entries["breast-w"]
        ds = preprocess(load_dataset(e.path, e), e)
        assert ds.num_features == 9
        assert ds.num_instances == 699
