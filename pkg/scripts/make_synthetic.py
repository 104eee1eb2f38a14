#!/usr/bin/env python3
"""Regenerate the bundled synthetic datasets (seeded, committed as CSV).

blobs4: two overlapping 4-d Gaussian clusters, 520 rows. Small enough for
desk-scale campaigns (4 qubits) while keeping hyperparameter choices
consequential. moons2: two interleaved half-circles, 240 rows, used by fast
pipeline tests (2 qubits).
"""

import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "data"


def write_csv(path, X, y, feature_names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(feature_names + ["class"])
        for row, label in zip(X, y):
            w.writerow([f"{v:.6f}" for v in row] + [int(label)])


def blobs4(rng):
    n = 260
    mu0 = np.array([-0.9, -0.6, 0.4, 0.0])
    mu1 = np.array([0.9, 0.6, -0.4, 0.2])
    cov = np.diag([1.0, 1.3, 0.9, 1.6])
    X0 = rng.multivariate_normal(mu0, cov, n)
    X1 = rng.multivariate_normal(mu1, cov, n)
    X = np.vstack([X0, X1])
    y = np.array([0] * n + [1] * n)
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


def moons2(rng):
    n = 120
    t0 = rng.uniform(0, np.pi, n)
    t1 = rng.uniform(0, np.pi, n)
    X0 = np.column_stack([np.cos(t0), np.sin(t0)])
    X1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([X0, X1]) + rng.normal(0, 0.12, (2 * n, 2))
    y = np.array([0] * n + [1] * n)
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


def main():
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240817)
    X, y = blobs4(rng)
    write_csv(OUT / "blobs4.csv", X, y, ["f0", "f1", "f2", "f3"])
    X, y = moons2(rng)
    write_csv(OUT / "moons2.csv", X, y, ["f0", "f1"])
    print(f"wrote {OUT / 'blobs4.csv'} and {OUT / 'moons2.csv'}")


if __name__ == "__main__":
    main()
