"""Surrogate-driven random-search verification of hyperparameter importance.

For every hyperparameter j and every value f in its fixing grid, a random
search samples full configurations, pins dimension j to f, and scores each
candidate with the surrogate forest instead of training a real model. An
important hyperparameter hurts when it cannot be optimized, so its searches
stall at lower best-so-far scores: y*_j, the mean final best over the fixed
values (repeats averaged first), drops, and its per-iteration rank among
the hyperparameters worsens (rank 1 = highest score).

Sampling draws one vector of values per dimension per search, so a search
that pins dimension j consumes exactly the same random stream as an
unconstrained search with the same seed; pinning an irrelevant dimension
then reproduces the unconstrained trajectory bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .forest import Forest, predict
from .space import ConfigurationSpace
from .util import average_ranks, derive_seed

ITERATIONS = 500
REPEATS = 10


@dataclass
class BestSoFarCurve:
    """Running maximum of surrogate scores for one fixed-value search."""

    hyperparameter: Optional[str]  # None for an unconstrained search
    fixed_value: object
    best: np.ndarray  # (iterations,)

    def __post_init__(self):
        if np.any(np.diff(self.best) < 0):
            raise ValidationError("best-so-far curve must be non-decreasing")


def _sample_search(
    space: ConfigurationSpace,
    rng: np.random.Generator,
    iterations: int,
    j: Optional[int],
    f,
) -> np.ndarray:
    X = space.sample_encoded(rng, iterations)
    if j is not None:
        X[:, j] = space.dims[j].encode(f)
    return X


def fixed_search(
    forest: Forest,
    j: Optional[Union[int, str]],
    f=None,
    iterations: int = ITERATIONS,
    rng: Optional[np.random.Generator] = None,
) -> BestSoFarCurve:
    """Random search over the space with dimension j pinned to value f.

    Pass j=None for an unconstrained search. Scores come from the surrogate
    forest; the curve holds the running maximum per iteration.
    """
    space = forest.space
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = space.index(j) if isinstance(j, str) else j
    name = None if idx is None else space.dims[idx].name
    X = _sample_search(space, rng, iterations, idx, f)
    scores = predict(forest, X)
    return BestSoFarCurve(
        hyperparameter=name, fixed_value=f, best=np.maximum.accumulate(scores)
    )


def aggregate_y_star(finals_per_value: Sequence[float]) -> float:
    """Mean final best over a hyperparameter's fixed values.

    Each entry is the final best-so-far for one fixed value, already
    averaged over repeats.
    """
    finals = np.asarray(finals_per_value, dtype=float)
    if finals.size == 0:
        raise ValidationError("need at least one fixed value")
    return float(finals.mean())


@dataclass
class VerificationResult:
    """Aggregated fixed-hyperparameter searches for one dataset's surrogate."""

    hyperparameters: List[str]
    iterations: int
    repeats: int
    curves: np.ndarray  # (D, iterations), averaged over repeats then values
    y_star: np.ndarray  # (D,)
    ranks: np.ndarray  # (iterations, D), rank 1 = highest curve

    def to_dict(self) -> dict:
        return {
            "hyperparameters": self.hyperparameters,
            "iterations": self.iterations,
            "repeats": self.repeats,
            "averaging_order": "repeats, then fixed values, then datasets",
            "y_star": {
                name: float(v)
                for name, v in zip(self.hyperparameters, self.y_star)
            },
            "final_rank": {
                name: float(r)
                for name, r in zip(self.hyperparameters, self.ranks[-1])
            },
        }


def run_verification(
    forest: Forest,
    iterations: int = ITERATIONS,
    repeats: int = REPEATS,
    seed: int = 0,
) -> VerificationResult:
    """All fixed-hyperparameter searches for one surrogate.

    For dimension j and its v-th fixed value, repeat r draws its stream
    from (seed, j name, v, r), so every search is independent and
    reproducible. Prediction is batched over all searches of a dimension.
    """
    space = forest.space
    D = space.num_dims
    curves = np.empty((D, iterations))
    for d, dim in enumerate(space.dims):
        grid = space.fixing_grid(d)
        value_curves = np.empty((len(grid), iterations))
        for vi, f in enumerate(grid):
            rows = []
            for r in range(repeats):
                rng = np.random.default_rng(derive_seed(seed, "search", dim.name, vi, r))
                rows.append(_sample_search(space, rng, iterations, d, f))
            scores = predict(forest, np.vstack(rows)).reshape(repeats, iterations)
            value_curves[vi] = np.maximum.accumulate(scores, axis=1).mean(axis=0)
        curves[d] = value_curves.mean(axis=0)
    ranks = np.stack([average_ranks(curves[:, t]) for t in range(iterations)])
    return VerificationResult(
        hyperparameters=space.names,
        iterations=iterations,
        repeats=repeats,
        curves=curves,
        y_star=curves[:, -1].copy(),
        ranks=ranks,
    )


@dataclass
class RankReport:
    """Per-iteration average ranks across datasets plus final y* values."""

    hyperparameters: List[str]
    mean_ranks: np.ndarray  # (iterations, D)
    y_star_by_dataset: Dict[str, Dict[str, float]]

    @property
    def final_ranks(self) -> np.ndarray:
        return self.mean_ranks[-1]

    def to_dict(self) -> dict:
        return {
            "hyperparameters": self.hyperparameters,
            "final_mean_rank": {
                name: float(r)
                for name, r in zip(self.hyperparameters, self.final_ranks)
            },
            "y_star_by_dataset": self.y_star_by_dataset,
        }


def rank_curves(results: Mapping[str, VerificationResult]) -> RankReport:
    """Average the per-iteration ranks over datasets.

    Every result must cover the same hyperparameters at the same iteration
    count; the mean of the ranks at any iteration stays (D + 1) / 2.
    """
    if not results:
        raise ValidationError("no verification results to rank")
    items = sorted(results.items())
    names = items[0][1].hyperparameters
    iterations = items[0][1].iterations
    for ds, res in items:
        if res.hyperparameters != names or res.iterations != iterations:
            raise ValidationError(
                f"verification result for {ds!r} does not cover the same "
                f"hyperparameters and iterations"
            )
    mean_ranks = np.mean([res.ranks for _, res in items], axis=0)
    y_star = {
        ds: {name: float(v) for name, v in zip(names, res.y_star)}
        for ds, res in items
    }
    return RankReport(
        hyperparameters=list(names), mean_ranks=mean_ranks, y_star_by_dataset=y_star
    )
