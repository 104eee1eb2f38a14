"""Variance decomposition of a tree ensemble over the configuration space.

Every fitted tree is a piecewise-constant function whose leaf boxes
partition the space, so marginals and variances integrate exactly: the
weight of a leaf along one dimension is the fraction of that dimension's
uniform measure covered by the leaf's box (category count over domain size,
integer-grid count over grid size, or interval length over range for the
continuous dimension, which lives on a log10 scale). The marginal of a
dimension subset U sums leaf values times the product of the weights of all
dimensions outside U, restricted to leaves compatible with the evaluation
point.

Per tree, the decomposition follows the classical functional-ANOVA scheme:
the grand mean f0, centered single-dimension effects, pairwise effects with
the singles subtracted, and variance contributions as the uniform-measure
expectation of each squared effect. The contribution fractions of singles
and pairs are a lower portion of the full decomposition, so their sum never
exceeds one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .forest import Forest, RegressionTree
from .space import CATEGORICAL, INTEGER_RANGE, ConfigurationSpace


def _variance_floor(grand_mean: float) -> float:
    # below this, the centered variance is float residue of a constant tree
    return 1e-20 * (1.0 + grand_mean * grand_mean)


@dataclass
class TreeDecomposition:
    """One tree's exact variance split: total, grand mean, per-subset parts."""

    total_variance: float
    grand_mean: float
    contributions: Dict[tuple, float]
    defined: bool


@dataclass
class MarginalTable:
    """Marginal values on an evaluation grid, per tree and tree-averaged."""

    subset: tuple
    grid: list
    per_tree: np.ndarray  # (n_trees, len(grid))
    mean: np.ndarray


@dataclass
class ImportanceReport:
    """Forest-level importance: tree-averaged fractions and marginal ranges."""

    names: List[str]
    fractions: Dict[tuple, float]
    fractions_std: Dict[tuple, float]
    marginal_range: Dict[int, float]
    tables: Dict[tuple, MarginalTable]
    tree_variances: np.ndarray
    n_trees: int
    n_trees_defined: int

    @property
    def defined(self) -> bool:
        return self.n_trees_defined > 0

    def singles_ranking(self) -> List[Tuple[str, float]]:
        """Dimension names with fractions, most important first."""
        items = [
            (self.names[u[0]], f) for u, f in self.fractions.items() if len(u) == 1
        ]
        return sorted(items, key=lambda kv: -kv[1])

    def to_dict(self) -> dict:
        singles = {}
        for u, f in sorted(self.fractions.items()):
            if len(u) != 1:
                continue
            d = u[0]
            table = self.tables.get(u)
            singles[self.names[d]] = {
                "fraction_mean": f,
                "fraction_std": self.fractions_std[u],
                "marginal_range": self.marginal_range[d],
                "grid": [_jsonable(v) for v in table.grid] if table else None,
                "marginal_mean": table.mean.tolist() if table else None,
            }
        pairs = {
            f"{self.names[u[0]]}|{self.names[u[1]]}": {
                "fraction_mean": f,
                "fraction_std": self.fractions_std[u],
            }
            for u, f in sorted(self.fractions.items())
            if len(u) == 2
        }
        return {
            "singles": singles,
            "pairs": pairs,
            "tree_variance_mean": float(np.mean(self.tree_variances)),
            "n_trees": self.n_trees,
            "n_trees_defined": self.n_trees_defined,
        }


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def _dim_atoms(space: ConfigurationSpace, tree: RegressionTree, d: int):
    """Atomic cells of dimension d and leaf membership.

    Returns (weights (A,), membership (L, A)). Atoms cover the dimension's
    uniform measure exactly; every leaf box is a union of atoms, so
    membership is all-or-nothing per atom.
    """
    dim = space.dims[d]
    if dim.kind == CATEGORICAL:
        k = dim.num_categories
        weights = np.full(k, 1.0 / k)
        member = (
            (tree.leaf_cat[:, d][:, None] >> np.arange(k)[None, :]) & 1
        ).astype(float)
        return weights, member
    if dim.kind == INTEGER_RANGE:
        vals = np.arange(int(dim.low), int(dim.high) + 1, dtype=float)
        weights = np.full(vals.size, 1.0 / vals.size)
        member = (
            (tree.leaf_lo[:, d][:, None] < vals[None, :])
            & (vals[None, :] <= tree.leaf_hi[:, d][:, None])
        ).astype(float)
        return weights, member
    lo0, hi0 = dim.encoded_bounds()
    cuts = np.unique(
        np.concatenate(
            [
                [lo0, hi0],
                np.clip(tree.leaf_lo[:, d], lo0, hi0),
                np.clip(tree.leaf_hi[:, d], lo0, hi0),
            ]
        )
    )
    mids = (cuts[:-1] + cuts[1:]) / 2.0
    weights = (cuts[1:] - cuts[:-1]) / (hi0 - lo0)
    member = (
        (tree.leaf_lo[:, d][:, None] < mids[None, :])
        & (mids[None, :] <= tree.leaf_hi[:, d][:, None])
    ).astype(float)
    return weights, member


def _grid_membership(space, tree, d, encoded_grid: np.ndarray) -> np.ndarray:
    """Membership (L, G) of explicit encoded evaluation points in leaf boxes."""
    if space.is_categorical(d):
        codes = encoded_grid.astype(np.int64)
        return ((tree.leaf_cat[:, d][:, None] >> codes[None, :]) & 1).astype(float)
    return (
        (tree.leaf_lo[:, d][:, None] < encoded_grid[None, :])
        & (encoded_grid[None, :] <= tree.leaf_hi[:, d][:, None])
    ).astype(float)


def _leaf_weights(space, tree) -> Tuple[list, np.ndarray, np.ndarray]:
    atoms = [_dim_atoms(space, tree, d) for d in range(space.num_dims)]
    W = np.stack([member @ weights for weights, member in atoms], axis=1)  # (L, D)
    measure = W.prod(axis=1)
    return atoms, W, measure


def tree_marginal(
    tree: RegressionTree,
    space: ConfigurationSpace,
    subset: Sequence[int],
    theta: Sequence,
) -> float:
    """Exact average of the tree over all dimensions outside ``subset``.

    ``theta`` holds native values for the subset dimensions, in order.
    """
    subset = tuple(int(d) for d in subset)
    if len(theta) != len(subset):
        raise ValidationError("theta length must match the subset")
    encoded = [space.dims[d].encode(v) for d, v in zip(subset, theta)]
    _, W, measure = _leaf_weights(space, tree)
    keep = np.ones(tree.num_leaves, dtype=bool)
    outside = measure.copy()
    for d, e in zip(subset, encoded):
        if space.is_categorical(d):
            keep &= ((tree.leaf_cat[:, d] >> int(e)) & 1).astype(bool)
        else:
            keep &= (tree.leaf_lo[:, d] < e) & (e <= tree.leaf_hi[:, d])
        outside = outside / W[:, d]
    return float(np.sum(tree.leaf_value[keep] * outside[keep]))


def variance_decomposition(
    tree: RegressionTree, space: ConfigurationSpace, max_order: int = 2
) -> TreeDecomposition:
    """Exact per-subset variances of one tree under the uniform measure."""
    if tree.leaf_lo is None:
        raise ValidationError("tree has no leaf boxes attached")
    if max_order not in (1, 2):
        raise ValidationError("max_order must be 1 or 2")
    D = space.num_dims
    atoms, W, measure = _leaf_weights(space, tree)
    vals = tree.leaf_value
    f0 = float(vals @ measure)
    centered = vals - f0
    total = float((centered * centered) @ measure)
    if total <= _variance_floor(f0):
        return TreeDecomposition(
            total_variance=0.0, grand_mean=f0, contributions={}, defined=False
        )
    coef_base = vals * measure
    contributions: Dict[tuple, float] = {}
    marginals: List[np.ndarray] = []
    for d in range(D):
        weights, member = atoms[d]
        marg = (coef_base / W[:, d]) @ member
        marginals.append(marg)
        contributions[(d,)] = max(float(weights @ (marg - f0) ** 2), 0.0)
    if max_order >= 2:
        for i in range(D):
            wi, Mi = atoms[i]
            for j in range(i + 1, D):
                wj, Mj = atoms[j]
                coef2 = coef_base / (W[:, i] * W[:, j])
                marg2 = (Mi * coef2[:, None]).T @ Mj
                resid = marg2 - marginals[i][:, None] - marginals[j][None, :] + f0
                contributions[(i, j)] = max(float(wi @ (resid * resid) @ wj), 0.0)
    return TreeDecomposition(
        total_variance=total, grand_mean=f0, contributions=contributions, defined=True
    )


def aggregate_importance(forest: Forest, max_order: int = 2) -> ImportanceReport:
    """Tree-averaged importance fractions and marginal ranges for a forest.

    Fractions are averaged per subset over the trees whose total variance is
    non-zero; constant trees are counted but contribute nothing. Marginal
    ranges are max minus min of the tree-averaged marginal on the declared
    evaluation grid of each dimension.
    """
    space = forest.space
    D = space.num_dims
    grids = [space.fixing_grid(d) for d in range(D)]
    enc_grids = [
        np.array([space.dims[d].encode(v) for v in grids[d]], dtype=float)
        for d in range(D)
    ]

    fraction_samples: Dict[tuple, List[float]] = {}
    tree_variances = []
    n_defined = 0
    grid_tables = [np.empty((forest.num_trees, len(grids[d]))) for d in range(D)]

    for t_index, tree in enumerate(forest.trees):
        decomp = variance_decomposition(tree, space, max_order=max_order)
        tree_variances.append(decomp.total_variance)
        if decomp.defined:
            n_defined += 1
            for u, v in decomp.contributions.items():
                fraction_samples.setdefault(u, []).append(v / decomp.total_variance)
        _, W, measure = _leaf_weights(space, tree)
        coef_base = tree.leaf_value * measure
        for d in range(D):
            member = _grid_membership(space, tree, d, enc_grids[d])
            grid_tables[d][t_index] = (coef_base / W[:, d]) @ member

    fractions = {u: float(np.mean(s)) for u, s in sorted(fraction_samples.items())}
    fractions_std = {u: float(np.std(s)) for u, s in sorted(fraction_samples.items())}
    tables = {}
    ranges = {}
    for d in range(D):
        mean = grid_tables[d].mean(axis=0)
        tables[(d,)] = MarginalTable(
            subset=(d,), grid=grids[d], per_tree=grid_tables[d], mean=mean
        )
        ranges[d] = float(mean.max() - mean.min())
    return ImportanceReport(
        names=space.names,
        fractions=fractions,
        fractions_std=fractions_std,
        marginal_range=ranges,
        tables=tables,
        tree_variances=np.array(tree_variances),
        n_trees=forest.num_trees,
        n_trees_defined=n_defined,
    )
