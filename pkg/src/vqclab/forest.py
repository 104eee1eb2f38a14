"""Random-forest surrogate over encoded configurations.

Trees split numeric dimensions on thresholds and categorical dimensions on
the best binary category subset (exhaustive search; every domain here is
tiny). Each leaf carries its prediction (mean target of its training rows)
and an axis-aligned box: a half-open interval (lo, hi] per numeric
dimension and a category bitmask per categorical dimension. The boxes of a
tree's leaves partition the whole space, which is what makes exact marginal
integration possible downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ValidationError
from .space import ConfigurationSpace, DEFAULT_SPACE, HyperparameterDef, RunTable
from .util import derive_seed, spearman

N_TREES = 128
MIN_ROWS = 5
FEATURE_FRACTION = 0.7
R2_GATE = 0.75

_SSE_IMPROVEMENT_EPS = 1e-12
_MAX_SUBSET_CATEGORIES = 16


@dataclass
class RegressionTree:
    """Flat array representation of one fitted tree.

    feature[i] == -1 marks a leaf. Numeric splits carry threshold[i] and
    send rows with x <= threshold left; categorical splits carry a bitmask
    cat_mask[i] of category indices that go left (absent categories fall
    right). Leaf boxes are stored per leaf over all dimensions: (lo, hi]
    intervals for numeric dims (+-inf at the root) and allowed-category
    bitmasks for categorical dims.
    """

    feature: np.ndarray
    threshold: np.ndarray
    cat_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_nodes: np.ndarray = field(default=None, repr=False)
    leaf_value: np.ndarray = field(default=None, repr=False)
    leaf_lo: np.ndarray = field(default=None, repr=False)
    leaf_hi: np.ndarray = field(default=None, repr=False)
    leaf_cat: np.ndarray = field(default=None, repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.feature)

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_nodes)


@dataclass
class Forest:
    trees: List[RegressionTree]
    space: ConfigurationSpace
    seed: int
    n_rows: int

    @property
    def num_trees(self) -> int:
        return len(self.trees)


@dataclass
class SurrogateQuality:
    r2: float
    rmse: float
    spearman_cc: float
    passed: bool
    n_rows: int
    zero_variance: bool = False

    def to_dict(self) -> dict:
        return {
            "r2": self.r2,
            "rmse": self.rmse,
            "spearman_cc": self.spearman_cc,
            "passed": self.passed,
            "n_rows": self.n_rows,
            "zero_variance": self.zero_variance,
        }


def _best_numeric_split(x: np.ndarray, y: np.ndarray):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    cs = np.cumsum(ys)
    css = np.cumsum(ys * ys)
    m = len(ys)
    valid = xs[1:] != xs[:-1]
    if not valid.any():
        return None
    nl = np.arange(1, m, dtype=float)
    sl = cs[:-1]
    ssl = css[:-1]
    sse = (ssl - sl * sl / nl) + ((css[-1] - ssl) - (cs[-1] - sl) ** 2 / (m - nl))
    sse[~valid] = np.inf
    j = int(np.argmin(sse))
    return float(sse[j]), float((xs[j] + xs[j + 1]) / 2.0)


def _best_categorical_split(codes: np.ndarray, y: np.ndarray, k: int):
    if k > _MAX_SUBSET_CATEGORIES:
        raise ValidationError(
            f"categorical domain of {k} values too large for exhaustive subsets"
        )
    counts = np.bincount(codes, minlength=k).astype(float)
    sums = np.bincount(codes, weights=y, minlength=k)
    sqs = np.bincount(codes, weights=y * y, minlength=k)
    present = np.flatnonzero(counts > 0)
    if len(present) < 2:
        return None
    anchor = int(present[0])
    others = present[1:]
    total_n, total_s, total_ss = counts.sum(), sums.sum(), sqs.sum()
    best = None
    # subsets containing the anchor category, excluding the full present set
    for bits in range(1 << len(others)):
        if bits == (1 << len(others)) - 1:
            continue
        mask = 1 << anchor
        n_l, s_l, ss_l = counts[anchor], sums[anchor], sqs[anchor]
        for t, cat in enumerate(others):
            if bits >> t & 1:
                mask |= 1 << int(cat)
                n_l += counts[cat]
                s_l += sums[cat]
                ss_l += sqs[cat]
        n_r = total_n - n_l
        sse = (ss_l - s_l * s_l / n_l) + ((total_ss - ss_l) - (total_s - s_l) ** 2 / n_r)
        if best is None or sse < best[0]:
            best = (float(sse), mask)
    return best


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    space: ConfigurationSpace,
    rng: np.random.Generator,
    min_rows: int = MIN_ROWS,
    feature_fraction: float = FEATURE_FRACTION,
    bootstrap: bool = True,
) -> RegressionTree:
    """Fit one regression tree on encoded rows.

    Rows are bootstrap-resampled (unless disabled for tests), splits
    greedily minimize the summed squared error over a fresh random subset
    of ceil(feature_fraction * D) candidate dimensions per node, and
    splitting stops below min_rows or at zero target variance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, D = X.shape
    if m < 10:
        raise ValidationError(f"need at least 10 rows to fit a tree, got {m}")
    if D != space.num_dims:
        raise ValidationError(f"row width {D} does not match space ({space.num_dims})")
    if bootstrap:
        pick = rng.integers(0, m, m)
        X = X[pick]
        y = y[pick]

    n_cand = max(1, math.ceil(feature_fraction * D))
    is_cat = [space.is_categorical(d) for d in range(D)]
    cat_codes = [
        X[:, d].astype(np.int64) if is_cat[d] else None for d in range(D)
    ]
    cat_sizes = [
        space.dims[d].num_categories if is_cat[d] else 0 for d in range(D)
    ]

    feature: List[int] = []
    threshold: List[float] = []
    cat_mask: List[int] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(math.nan)
        cat_mask.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(math.nan)
        return len(feature) - 1

    root = new_node()
    stack: List[Tuple[int, np.ndarray]] = [(root, np.arange(len(y)))]
    while stack:
        node, rows = stack.pop()
        yr = y[rows]
        value[node] = float(yr.mean())
        if len(rows) < min_rows or np.ptp(yr) == 0.0:
            continue
        cand = np.sort(rng.choice(D, size=n_cand, replace=False))
        total_ss = float(np.sum(yr * yr))
        parent_sse = total_ss - yr.sum() ** 2 / len(yr)
        # mathematical ties between dims resolve to the earliest candidate; the
        # margin tracks the float-error envelope of the cumulative-sum SSE
        tie_tol = 1e-12 * len(yr) * (total_ss + 1e-30)
        best = None  # (sse, dim, threshold_or_mask)
        for d in cand:
            if is_cat[d]:
                found = _best_categorical_split(cat_codes[d][rows], yr, cat_sizes[d])
            else:
                found = _best_numeric_split(X[rows, d], yr)
            if found is not None and (best is None or found[0] < best[0] - tie_tol):
                best = (found[0], int(d), found[1])
        if best is None or parent_sse - best[0] <= _SSE_IMPROVEMENT_EPS:
            continue
        _, d, split = best
        if is_cat[d]:
            go_left = (np.right_shift(split, cat_codes[d][rows]) & 1).astype(bool)
            cat_mask[node] = int(split)
        else:
            go_left = X[rows, d] <= split
            threshold[node] = float(split)
        feature[node] = d
        lchild = new_node()
        rchild = new_node()
        left[node] = lchild
        right[node] = rchild
        # push right first so the left child pops next (rng order is DFS)
        stack.append((rchild, rows[~go_left]))
        stack.append((lchild, rows[go_left]))

    tree = RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        cat_mask=np.array(cat_mask, dtype=np.int64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )
    _attach_leaf_boxes(tree, space)
    return tree


def _attach_leaf_boxes(tree: RegressionTree, space: ConfigurationSpace) -> None:
    D = space.num_dims
    full_masks = np.array(
        [
            (1 << space.dims[d].num_categories) - 1 if space.is_categorical(d) else -1
            for d in range(D)
        ],
        dtype=np.int64,
    )
    leaf_nodes: List[int] = []
    boxes_lo: List[np.ndarray] = []
    boxes_hi: List[np.ndarray] = []
    boxes_cat: List[np.ndarray] = []
    lo0 = np.full(D, -np.inf)
    hi0 = np.full(D, np.inf)
    stack = [(0, lo0, hi0, full_masks)]
    while stack:
        node, lo, hi, masks = stack.pop()
        d = tree.feature[node]
        if d < 0:
            leaf_nodes.append(node)
            boxes_lo.append(lo)
            boxes_hi.append(hi)
            boxes_cat.append(masks)
            continue
        if tree.cat_mask[node] >= 0:
            lmask = masks.copy()
            rmask = masks.copy()
            lmask[d] = masks[d] & tree.cat_mask[node]
            rmask[d] = masks[d] & ~tree.cat_mask[node]
            stack.append((tree.right[node], lo, hi, rmask))
            stack.append((tree.left[node], lo, hi, lmask))
        else:
            t = tree.threshold[node]
            lhi = hi.copy()
            lhi[d] = min(hi[d], t)
            rlo = lo.copy()
            rlo[d] = max(lo[d], t)
            stack.append((tree.right[node], rlo, hi, masks))
            stack.append((tree.left[node], lo, lhi, masks))
    tree.leaf_nodes = np.array(leaf_nodes, dtype=np.int64)
    tree.leaf_value = tree.value[tree.leaf_nodes]
    tree.leaf_lo = np.vstack(boxes_lo)
    tree.leaf_hi = np.vstack(boxes_hi)
    tree.leaf_cat = np.vstack(boxes_cat)


def predict_tree(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """Leaf values for a matrix of encoded rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if rows.size == 0:
            continue
        d = tree.feature[node]
        if d < 0:
            out[rows] = tree.value[node]
            continue
        if tree.cat_mask[node] >= 0:
            codes = X[rows, d].astype(np.int64)
            go_left = (np.right_shift(int(tree.cat_mask[node]), codes) & 1).astype(bool)
        else:
            go_left = X[rows, d] <= tree.threshold[node]
        stack.append((tree.left[node], rows[go_left]))
        stack.append((tree.right[node], rows[~go_left]))
    return out


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    space: ConfigurationSpace,
    seed: int = 0,
    n_trees: int = N_TREES,
    min_rows: int = MIN_ROWS,
    feature_fraction: float = FEATURE_FRACTION,
    bootstrap: bool = True,
) -> Forest:
    """Fit the tree ensemble; each tree draws from its own derived rng stream."""
    trees = [
        fit_tree(
            X,
            y,
            space,
            np.random.default_rng(derive_seed(seed, "tree", t)),
            min_rows=min_rows,
            feature_fraction=feature_fraction,
            bootstrap=bootstrap,
        )
        for t in range(n_trees)
    ]
    return Forest(trees=trees, space=space, seed=seed, n_rows=len(y))


def predict(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Forest prediction: mean over trees of the containing leaf's value."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += predict_tree(tree, X)
    return acc / forest.num_trees


def assess_quality_xy(
    X: np.ndarray,
    y: np.ndarray,
    space: ConfigurationSpace,
    k: int = 10,
    seed: int = 0,
    n_trees: int = N_TREES,
) -> SurrogateQuality:
    """k-fold cross-validated surrogate quality with pooled predictions.

    Per fold a fresh forest is fit on the train rows and predicts the test
    rows; R2, RMSE and the rank correlation are computed over the pooled
    out-of-fold predictions. passed requires R2 >= 0.75.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 50:
        raise ValidationError(f"need at least 50 rows to assess quality, got {n}")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return SurrogateQuality(
            r2=0.0,
            rmse=0.0,
            spearman_cc=0.0,
            passed=False,
            n_rows=n,
            zero_variance=True,
        )
    shuffled = np.random.default_rng(derive_seed(seed, "cv")).permutation(n)
    preds = np.empty(n)
    for i, test in enumerate(np.array_split(shuffled, k)):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        fold_forest = fit_forest(
            X[mask], y[mask], space, seed=derive_seed(seed, "fold", i), n_trees=n_trees
        )
        preds[test] = predict(fold_forest, X[test])
    sse = float(np.sum((preds - y) ** 2))
    r2 = 1.0 - sse / sst
    return SurrogateQuality(
        r2=r2,
        rmse=float(np.sqrt(np.mean((preds - y) ** 2))),
        spearman_cc=spearman(preds, y),
        passed=bool(r2 >= R2_GATE),
        n_rows=n,
    )


def assess_quality(
    run_table: RunTable, k: int = 10, seed: int = 0, n_trees: int = N_TREES
) -> SurrogateQuality:
    """Quality of a surrogate over a campaign run table (standard space)."""
    X, y = run_table.encoded()
    return assess_quality_xy(X, y, DEFAULT_SPACE, k=k, seed=seed, n_trees=n_trees)


# --- serialization ----------------------------------------------------------

FOREST_FORMAT_VERSION = 1


def _dim_to_dict(d: HyperparameterDef) -> dict:
    return {
        "name": d.name,
        "kind": d.kind,
        "low": d.low,
        "high": d.high,
        "categories": [
            c if not isinstance(c, bool) else bool(c) for c in d.categories
        ]
        if d.categories
        else None,
    }


def forest_to_dict(forest: Forest) -> dict:
    trees = []
    for t in forest.trees:
        trees.append(
            {
                "feature": t.feature.tolist(),
                "threshold": [None if math.isnan(v) else v for v in t.threshold],
                "cat_mask": t.cat_mask.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
        )
    return {
        "format_version": FOREST_FORMAT_VERSION,
        "seed": forest.seed,
        "n_rows": forest.n_rows,
        "dims": [_dim_to_dict(d) for d in forest.space.dims],
        "trees": trees,
    }


def forest_from_dict(doc: dict, space: ConfigurationSpace) -> Forest:
    if doc.get("format_version") != FOREST_FORMAT_VERSION:
        raise ValidationError(
            f"unsupported forest format {doc.get('format_version')!r}"
        )
    names = [d["name"] for d in doc["dims"]]
    if names != space.names:
        raise ValidationError(
            f"forest dims {names} do not match the space {space.names}"
        )
    trees = []
    for td in doc["trees"]:
        tree = RegressionTree(
            feature=np.array(td["feature"], dtype=np.int64),
            threshold=np.array(
                [math.nan if v is None else v for v in td["threshold"]], dtype=float
            ),
            cat_mask=np.array(td["cat_mask"], dtype=np.int64),
            left=np.array(td["left"], dtype=np.int64),
            right=np.array(td["right"], dtype=np.int64),
            value=np.array(td["value"], dtype=float),
        )
        _attach_leaf_boxes(tree, space)
        trees.append(tree)
    return Forest(trees=trees, space=space, seed=doc["seed"], n_rows=doc["n_rows"])


def save_forest(forest: Forest, path) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(forest)))


def load_forest(path, space: ConfigurationSpace) -> Forest:
    return forest_from_dict(json.loads(Path(path).read_text()), space)
