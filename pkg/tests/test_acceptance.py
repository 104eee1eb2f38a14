"""Acceptance criteria, one test per criterion, each printing PASS or FAIL.

Criteria 6 and 7 run full desk-scale campaigns and together dominate the
suite's runtime. Criterion 6 requires the banknote-authentication snapshot
(data/banknote-authentication.csv); without it the test fails with an
explanation rather than silently passing on substitute data. Fetch the
snapshot with scripts/fetch_datasets.py on a machine with network access.
"""

import json
import os
import time
from pathlib import Path

import numpy as np

from vqclab.circuits import assemble_circuit, realize_circuit
from vqclab.fanova import aggregate_importance, tree_marginal, variance_decomposition
from vqclab.forest import assess_quality_xy, fit_forest, predict_tree
from vqclab.orchestrator import ExperimentManifest, cmd_analyze, cmd_sample_runs, read_run_table
from vqclab.space import (
    CATEGORICAL,
    ConfigurationSpace,
    DEFAULT_SPACE,
    HyperparameterDef,
    RUNS_CSV_HEADER,
    RunRow,
    run_row_to_csv,
    sample_configuration,
)
from vqclab.training import ModelParameters, circuit_gradient, forward, init_model, loss
from vqclab.verification import fixed_search, run_verification

import oracles
from conftest import DATA_DIR


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[ACCEPTANCE] criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def test_criterion_1_simulator_oracle_equivalence():
    started = time.monotonic()
    worst = 0.0
    for i in range(500):
        rng = np.random.default_rng(10_000 + i)
        cfg = sample_configuration(DEFAULT_SPACE, rng)
        n = 2 + i % 3
        template = assemble_circuit(cfg, n)
        x = rng.uniform(-1.5, 1.5, n)
        params = rng.uniform(0.0, 2 * np.pi, template.num_parameters)
        got = realize_circuit(template, x, params).amplitudes
        want = oracles.template_state(template, x, params)
        worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.monotonic() - started
    report(
        1,
        worst <= 1e-10 and elapsed < 60.0,
        f"max amplitude deviation {worst:.2e} over 500 circuits (n=2..4), "
        f"{elapsed:.1f}s (< 60s)",
    )


def test_criterion_2_gradient_suite():
    started = time.monotonic()
    worst = 0.0
    h = 1e-3
    for i in range(100):
        rng = np.random.default_rng(20_000 + i)
        cfg = sample_configuration(DEFAULT_SPACE, rng)
        n = 2 + i % 3
        template = assemble_circuit(cfg, n)
        model = init_model(template, rng)
        x = rng.uniform(-1.5, 1.5, n)
        y = int(rng.integers(0, 2))
        grad = circuit_gradient(template, model, x, y).to_vector()
        vec = model.to_vector()
        P, T = template.num_parameters, template.observable.num_terms
        for j in range(len(vec)):
            up = vec.copy()
            up[j] += h
            down = vec.copy()
            down[j] -= h
            fd = (
                loss(forward(template, ModelParameters.from_vector(up, P, T), x), y)
                - loss(forward(template, ModelParameters.from_vector(down, P, T), x), y)
            ) / (2 * h)
            worst = max(worst, abs(grad[j] - fd))
    elapsed = time.monotonic() - started
    report(
        2,
        worst <= 1e-5 and elapsed < 120.0,
        f"max |shift-rule - finite difference| = {worst:.2e} over 100 probes, "
        f"{elapsed:.1f}s (< 120s)",
    )


def test_criterion_3_fanova_exactness():
    started = time.monotonic()
    # exactness on an all-categorical 4-dimensional space
    space4 = ConfigurationSpace(
        [
            HyperparameterDef("a", CATEGORICAL, categories=(0, 1, 2)),
            HyperparameterDef("b", CATEGORICAL, categories=(0, 1)),
            HyperparameterDef("c", CATEGORICAL, categories=(0, 1, 2)),
            HyperparameterDef("d", CATEGORICAL, categories=(0, 1)),
        ]
    )
    grid = oracles.full_grid(space4)
    rng = np.random.default_rng(3)
    target = rng.uniform(0, 1, len(grid))
    X = np.vstack([grid] * 8)
    y = np.tile(target, 8) + rng.normal(0, 0.01, len(grid) * 8)
    forest = fit_forest(X, y, space4, seed=5, n_trees=128)
    worst = 0.0
    for tree in forest.trees:
        pred = lambda pts: predict_tree(tree, pts)
        dec = variance_decomposition(tree, space4)
        f0, total, contributions = oracles.brute_decomposition(pred, space4, grid)
        worst = max(worst, abs(dec.grand_mean - f0), abs(dec.total_variance - total))
        for u, v in contributions.items():
            worst = max(worst, abs(dec.contributions[u] - v))
        for d in range(4):
            for ci, cat in enumerate(space4.dims[d].categories):
                got = tree_marginal(tree, space4, (d,), (cat,))
                want = oracles.brute_marginal(pred, space4, grid, (d,), (float(ci),))
                worst = max(worst, abs(got - want))

    # a target driven by one hyperparameter concentrates its fraction
    rng = np.random.default_rng(4)
    X10 = DEFAULT_SPACE.sample_encoded(rng, 1000)
    y10 = 1 / (1 + np.exp(-(X10[:, 0] + 2)))
    forest10 = fit_forest(X10, y10, DEFAULT_SPACE, seed=6, n_trees=128)
    rep = aggregate_importance(forest10, max_order=1)
    lr_fraction = rep.fractions[(0,)]
    elapsed = time.monotonic() - started
    report(
        3,
        worst <= 1e-9 and lr_fraction >= 0.9 and elapsed < 120.0,
        f"max brute-force deviation {worst:.2e}, single-hyperparameter fraction "
        f"{lr_fraction:.3f} (>= 0.9), {elapsed:.1f}s (< 120s)",
    )


def _synthetic_run_table(path: Path, targets_fn, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    lines = [",".join(RUNS_CSV_HEADER)]
    for i in range(n):
        cfg = sample_configuration(DEFAULT_SPACE, rng)
        y = float(np.clip(targets_fn(cfg, rng), 0.0, 1.0))
        lines.append(run_row_to_csv(RunRow(i, cfg, y, "ok", seed=i)))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def test_criterion_4_surrogate_gate(tmp_path):
    started = time.monotonic()
    # pure noise: gate must exclude the dataset
    out = tmp_path / "noise_out"
    _synthetic_run_table(
        out / "noise" / "runs.csv", lambda cfg, rng: rng.uniform(0.2, 0.9), seed=1
    )
    manifest_path = tmp_path / "m.json"
    manifest_path.write_text(json.dumps({"datasets": []}))
    result = cmd_analyze(
        ExperimentManifest(datasets_manifest=str(manifest_path), out_dir=str(out))
    )
    quality = json.loads((out / "quality.json").read_text())
    noise_r2 = quality["datasets"]["noise"]["r2"]
    noise_excluded = "noise" in quality["excluded"] and result["passed"] == []

    # deterministic function of three hyperparameters plus sd-0.02 noise
    def learnable(cfg, rng):
        base = 0.5 + 0.25 / (1 + np.exp(-(np.log10(cfg.learning_rate) + 2)))
        base += 0.08 * (cfg.depth / 10.0)
        base += 0.06 if cfg.is_data_encoding_hardware_efficient else 0.0
        return base + rng.normal(0.0, 0.02)

    rows = []
    gen = np.random.default_rng(7)
    for _ in range(1000):
        cfg = sample_configuration(DEFAULT_SPACE, gen)
        rows.append((cfg, learnable(cfg, gen)))
    X = np.array([DEFAULT_SPACE.encode(c.as_dict()) for c, _ in rows])
    yv = np.clip([v for _, v in rows], 0.0, 1.0)
    q = assess_quality_xy(X, np.asarray(yv), DEFAULT_SPACE, k=10, seed=3)
    elapsed = time.monotonic() - started
    report(
        4,
        noise_excluded and noise_r2 < 0.75 and q.passed and q.r2 >= 0.75 and elapsed < 300.0,
        f"noise r2={noise_r2:.3f} excluded={noise_excluded}, learnable r2={q.r2:.3f} "
        f"passed={q.passed}, {elapsed:.1f}s (< 300s)",
    )


def test_criterion_5_verification_coherence():
    started = time.monotonic()
    rng = np.random.default_rng(0)
    X = DEFAULT_SPACE.sample_encoded(rng, 600)
    y = 1 / (1 + np.exp(-(X[:, 0] + 2)))
    surrogate = fit_forest(
        X, y, DEFAULT_SPACE, seed=5, n_trees=16, bootstrap=False, feature_fraction=1.0
    )
    depends_only_on_lr = all(
        set(t.feature[t.feature >= 0]) <= {0} for t in surrogate.trees
    )

    res = run_verification(surrogate, iterations=500, repeats=10, seed=9)
    lr_lowest = int(np.argmin(res.y_star)) == 0
    lr_worst_rank = int(np.argmax(res.ranks[-1])) == 0

    fixed = fixed_search(
        surrogate, "entangler_operation", "cz", 500, np.random.default_rng(21)
    )
    free = fixed_search(surrogate, None, None, 500, np.random.default_rng(21))
    gap = float(np.max(np.abs(fixed.best - free.best)))
    elapsed = time.monotonic() - started
    report(
        5,
        depends_only_on_lr and lr_lowest and lr_worst_rank and gap <= 1e-6 and elapsed < 60.0,
        f"lr lowest y*={lr_lowest}, lr worst rank={lr_worst_rank}, "
        f"fix-irrelevant gap={gap:.2e} (<= 1e-6), {elapsed:.1f}s (< 60s)",
    )


def _desk_scale_manifest(tmp_path, dataset_name, csv_path, out_name, jobs=1, positive="1", label="class"):
    manifest_path = tmp_path / f"{out_name}_manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "datasets": [
                    {
                        "name": dataset_name,
                        "path": str(csv_path),
                        "label_column": label,
                        "positive_label": positive,
                        "categorical_columns": [],
                    }
                ]
            }
        )
    )
    return ExperimentManifest(
        datasets_manifest=str(manifest_path),
        out_dir=str(tmp_path / out_name),
        n_configs=200,
        epochs=30,
        folds=5,
        master_seed=414213,
        jobs=jobs,
        max_features=6,
    )


def test_criterion_6_desk_scale_banknote(tmp_path):
    csv_path = DATA_DIR / "banknote-authentication.csv"
    if not csv_path.exists():
        report(
            6,
            False,
            "banknote-authentication.csv is not present: this build environment "
            "has no network route to openml.org, so the snapshot could not be "
            "bundled. Run scripts/fetch_datasets.py once on a connected machine "
            "and re-run this test; it then executes the full desk-scale campaign.",
        )

    jobs = min(4, os.cpu_count() or 1)
    manifest = _desk_scale_manifest(
        tmp_path, "banknote-authentication", csv_path, "banknote", jobs=jobs,
        positive="2", label="Class",
    )
    started = time.monotonic()
    cmd_sample_runs(manifest)
    elapsed = time.monotonic() - started

    table = read_run_table(Path(manifest.out_dir) / "banknote-authentication" / "runs.csv",
                           "banknote-authentication")
    ys = [r.y for r in table.successful()]
    best = max(ys)

    X, y = table.encoded()
    q = assess_quality_xy(X, y, DEFAULT_SPACE, k=10, seed=1)
    forest = fit_forest(X, y, DEFAULT_SPACE, seed=2)
    rep = aggregate_importance(forest, max_order=1)
    ranking = [name for name, _ in rep.singles_ranking()]
    lr_top2 = "learning_rate" in ranking[:2]
    entangler_bottom3 = "entangler_operation" in ranking[-3:]
    print(
        f"[ACCEPTANCE] criterion 6 soft check: entangler_operation in bottom 3 "
        f"by variance fraction: {entangler_bottom3} (ranking: {ranking})"
    )
    report(
        6,
        elapsed <= 7200.0 and best >= 0.85 and q.r2 >= 0.6 and lr_top2,
        f"campaign {elapsed / 60:.1f} min (<= 120), best accuracy {best:.3f} "
        f"(>= 0.85), surrogate r2 {q.r2:.3f} (>= 0.6), learning_rate rank "
        f"{ranking.index('learning_rate') + 1} (top 2)",
    )


def test_criterion_7_desk_scale_determinism(tmp_path):
    outputs = []
    for out_name in ("detA", "detB"):
        manifest = _desk_scale_manifest(
            tmp_path, "blobs4", DATA_DIR / "blobs4.csv", out_name, jobs=1
        )
        cmd_sample_runs(manifest)
        cmd_analyze(manifest)
        outputs.append(Path(manifest.out_dir))

    identical = {}
    for rel in ("blobs4/runs.csv", "importance.csv", "verification.csv"):
        identical[rel] = (outputs[0] / rel).read_bytes() == (outputs[1] / rel).read_bytes()
    report(
        7,
        all(identical.values()),
        "byte-identical outputs across two desk-scale executions: "
        + ", ".join(f"{k}={v}" for k, v in identical.items()),
    )
