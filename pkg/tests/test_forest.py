import numpy as np
import pytest

from vqclab.errors import ValidationError
from vqclab.forest import (
    Forest,
    assess_quality_xy,
    fit_forest,
    fit_tree,
    forest_from_dict,
    forest_to_dict,
    predict,
    predict_tree,
)
from vqclab.space import (
    CATEGORICAL,
    ConfigurationSpace,
    HyperparameterDef,
    default_space,
)

import oracles


def small_space():
    return ConfigurationSpace(
        [
            HyperparameterDef("a", CATEGORICAL, categories=(0, 1, 2)),
            HyperparameterDef("b", CATEGORICAL, categories=("x", "y")),
            HyperparameterDef("c", "integer_range", low=1, high=4),
            HyperparameterDef("d", "continuous_log", low=0.001, high=1.0),
        ]
    )


class TestFitTree:
    def test_constant_target_single_leaf(self, space, rng):
        X = space.sample_encoded(rng, 40)
        y = np.full(40, 0.7)
        tree = fit_tree(X, y, space, np.random.default_rng(0))
        assert tree.num_leaves == 1
        assert tree.leaf_value[0] == pytest.approx(0.7)

    def test_root_splits_on_informative_dim(self, space):
        # y depends only on map_type membership; its split has zero SSE while
        # any other split stays positive (brute-checked below)
        rng = np.random.default_rng(1)
        X = space.sample_encoded(rng, 200)
        d = space.index("map_type")
        y = np.where(X[:, d] == 0.0, 0.2, 0.9)
        tree = fit_tree(
            X, y, space, np.random.default_rng(2), bootstrap=False, feature_fraction=1.0
        )
        assert tree.feature[0] == d
        # brute check: the chosen split separates perfectly
        for other in range(space.num_dims):
            if other == d:
                continue
            vals = np.unique(X[:, other])
            for v in vals[:-1]:
                left = y[X[:, other] <= v]
                right = y[X[:, other] > v]
                sse = left.var() * len(left) + right.var() * len(right)
                assert sse > 1e-6

    def test_leaf_values_are_means(self, space):
        rng = np.random.default_rng(3)
        X = space.sample_encoded(rng, 120)
        y = rng.uniform(0, 1, 120)
        tree = fit_tree(X, y, space, np.random.default_rng(4), bootstrap=False)
        preds = predict_tree(tree, X)
        # group rows by leaf via prediction value and compare means
        for val in np.unique(preds):
            assert y[preds == val].mean() == pytest.approx(val, abs=1e-12)

    def test_too_few_rows(self, space, rng):
        X = space.sample_encoded(rng, 5)
        with pytest.raises(ValidationError):
            fit_tree(X, np.ones(5), space, np.random.default_rng(0))

    def test_reproducible(self, space, rng):
        X = space.sample_encoded(rng, 100)
        y = rng.uniform(0, 1, 100)
        a = fit_tree(X, y, space, np.random.default_rng(9))
        b = fit_tree(X, y, space, np.random.default_rng(9))
        np.testing.assert_array_equal(a.feature, b.feature)
        np.testing.assert_array_equal(a.threshold, b.threshold)
        np.testing.assert_array_equal(a.value, b.value)


class TestLeafBoxes:
    def test_partition_property(self, space):
        rng = np.random.default_rng(5)
        X = space.sample_encoded(rng, 300)
        y = rng.uniform(0, 1, 300)
        forest = fit_forest(X, y, space, seed=6, n_trees=10)
        points = space.sample_encoded(rng, 1000)
        for tree in forest.trees:
            inside = np.ones((tree.num_leaves, len(points)), dtype=bool)
            for d in range(space.num_dims):
                if space.is_categorical(d):
                    codes = points[:, d].astype(np.int64)
                    inside &= (
                        (tree.leaf_cat[:, d][:, None] >> codes[None, :]) & 1
                    ).astype(bool)
                else:
                    inside &= (tree.leaf_lo[:, d][:, None] < points[None, :, d]) & (
                        points[None, :, d] <= tree.leaf_hi[:, d][:, None]
                    )
            counts = inside.sum(axis=0)
            assert np.all(counts == 1)

    def test_box_value_agrees_with_traversal(self, space):
        rng = np.random.default_rng(6)
        X = space.sample_encoded(rng, 200)
        y = rng.uniform(0, 1, 200)
        tree = fit_forest(X, y, space, seed=1, n_trees=1).trees[0]
        points = space.sample_encoded(rng, 200)
        by_walk = predict_tree(tree, points)
        for p, expected in zip(points, by_walk):
            inside = np.ones(tree.num_leaves, dtype=bool)
            for d in range(space.num_dims):
                if space.is_categorical(d):
                    inside &= ((tree.leaf_cat[:, d] >> int(p[d])) & 1).astype(bool)
                else:
                    inside &= (tree.leaf_lo[:, d] < p[d]) & (p[d] <= tree.leaf_hi[:, d])
            assert tree.leaf_value[inside][0] == pytest.approx(expected)


class TestForestPredict:
    def test_single_leaf_trees(self, space, rng):
        X = space.sample_encoded(rng, 50)
        y = np.full(50, 0.7)
        forest = fit_forest(X, y, space, seed=0, n_trees=5)
        points = space.sample_encoded(rng, 20)
        np.testing.assert_allclose(predict(forest, points), 0.7)

    def test_predictions_within_target_range(self, space, rng):
        X = space.sample_encoded(rng, 200)
        y = rng.uniform(0.2, 0.9, 200)
        forest = fit_forest(X, y, space, seed=3, n_trees=16)
        preds = predict(forest, space.sample_encoded(rng, 500))
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12

    def test_invariant_to_never_split_dims(self, space):
        rng = np.random.default_rng(8)
        X = space.sample_encoded(rng, 300)
        d = space.index("depth")
        y = 0.1 * X[:, d]
        forest = fit_forest(
            X, y, space, seed=2, n_trees=8, bootstrap=False, feature_fraction=1.0
        )
        pts = space.sample_encoded(rng, 50)
        base = predict(forest, pts)
        flipped = pts.copy()
        flipped[:, space.index("entangler_operation")] = (
            1 - flipped[:, space.index("entangler_operation")]
        )
        np.testing.assert_allclose(predict(forest, flipped), base, atol=1e-12)

    def test_in_sample_consistency_no_bootstrap(self):
        # exhaustive categorical grid replicated, noiseless deterministic target
        sp = ConfigurationSpace(
            [
                HyperparameterDef("a", CATEGORICAL, categories=(0, 1, 2)),
                HyperparameterDef("b", CATEGORICAL, categories=(0, 1, 2)),
                HyperparameterDef("c", CATEGORICAL, categories=(0, 1)),
            ]
        )
        grid = oracles.full_grid(sp)
        X = np.vstack([grid] * 8)
        rng = np.random.default_rng(0)
        target = rng.uniform(0, 1, len(grid))
        y = np.tile(target, 8)
        forest = fit_forest(
            X, y, sp, seed=5, n_trees=8, bootstrap=False, feature_fraction=1.0
        )
        preds = predict(forest, X)
        r2 = 1 - np.sum((preds - y) ** 2) / np.sum((y - y.mean()) ** 2)
        assert r2 >= 0.99


class TestAssessQuality:
    def test_perfect_surrogate_metrics(self):
        # hand-built quality computation sanity: predictions equal to targets
        from vqclab.util import spearman

        y = np.linspace(0, 1, 60)
        sse = 0.0
        sst = np.sum((y - y.mean()) ** 2)
        assert 1 - sse / sst == 1.0
        assert spearman(y, y) == pytest.approx(1.0)
        assert spearman(y, -y) == pytest.approx(-1.0)

    def test_learnable_target_passes(self, space):
        rng = np.random.default_rng(10)
        X = space.sample_encoded(rng, 300)
        y = 1 / (1 + np.exp(-(X[:, 0] + 2))) + 0.05 * X[:, 2]
        y += rng.normal(0, 0.02, len(y))
        q = assess_quality_xy(X, y, space, k=10, seed=1, n_trees=32)
        assert q.passed and q.r2 >= 0.75
        assert q.spearman_cc > 0.8

    def test_noise_target_fails_gate(self, space):
        rng = np.random.default_rng(11)
        X = space.sample_encoded(rng, 300)
        y = rng.uniform(0, 1, 300)
        q = assess_quality_xy(X, y, space, k=10, seed=1, n_trees=32)
        assert not q.passed
        assert q.r2 < 0.75

    def test_zero_variance_flagged(self, space, rng):
        X = space.sample_encoded(rng, 60)
        q = assess_quality_xy(X, np.full(60, 0.5), space, k=10, seed=0, n_trees=4)
        assert q.zero_variance and not q.passed

    def test_too_few_rows(self, space, rng):
        X = space.sample_encoded(rng, 30)
        with pytest.raises(ValidationError):
            assess_quality_xy(X, np.linspace(0, 1, 30), space)


class TestSerialization:
    def test_round_trip(self, space):
        rng = np.random.default_rng(13)
        X = space.sample_encoded(rng, 150)
        y = rng.uniform(0, 1, 150)
        forest = fit_forest(X, y, space, seed=21, n_trees=6)
        doc = forest_to_dict(forest)
        back = forest_from_dict(doc, space)
        pts = space.sample_encoded(rng, 200)
        np.testing.assert_allclose(predict(back, pts), predict(forest, pts), atol=0)
        for a, b in zip(forest.trees, back.trees):
            np.testing.assert_array_equal(a.leaf_lo, b.leaf_lo)
            np.testing.assert_array_equal(a.leaf_cat, b.leaf_cat)

    def test_space_mismatch_rejected(self, space):
        rng = np.random.default_rng(14)
        X = space.sample_encoded(rng, 60)
        forest = fit_forest(X, rng.uniform(0, 1, 60), space, seed=0, n_trees=2)
        doc = forest_to_dict(forest)
        with pytest.raises(ValidationError):
            forest_from_dict(doc, small_space())


class TestGenericSpaces:
    def test_mixed_small_space(self):
        sp = small_space()
        rng = np.random.default_rng(15)
        X = sp.sample_encoded(rng, 250)
        y = 0.3 * (X[:, 0] == 1) + 0.2 * X[:, 2] + 0.1 * X[:, 3]
        forest = fit_forest(X, y, sp, seed=1, n_trees=16)
        preds = predict(forest, X)
        r2 = 1 - np.sum((preds - y) ** 2) / np.sum((y - y.mean()) ** 2)
        assert r2 > 0.9
