"""Small shared helpers: seed derivation, ranking, float formatting."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Derive a stable 63-bit seed from an arbitrary tuple of labels.

    The derivation is a keyed hash of the string forms of ``parts``, so the
    same labels give the same seed on every platform and every run. Used to
    hand independent, reproducible rng streams to runs, folds, trees and
    searches without threading generator state through the call graph.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def average_ranks(values) -> np.ndarray:
    """Rank values descending (rank 1 = largest), ties get average ranks."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(v.shape, dtype=float)
    ranks[order] = np.arange(1, v.size + 1, dtype=float)
    for val in np.unique(v):
        mask = v == val
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    rx = average_ranks(np.asarray(x, dtype=float))
    ry = average_ranks(np.asarray(y, dtype=float))
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


def fmt_float(x: float) -> str:
    """Serialize a float with 17 significant digits (lossless round trip)."""
    return "%.17g" % float(x)
