"""Campaign orchestration: sample+train runs, analyze, verify.

Directory layout under the output directory:

    <out>/<dataset>/runs.csv          one row per sampled configuration
    <out>/<dataset>/records/*.json    per-run fold-level training records
    <out>/<dataset>/forest.json       surrogate fitted on all successful runs
    <out>/quality.json                surrogate gate results per dataset
    <out>/importance.csv|.json        variance fractions and marginal ranges
    <out>/verification.csv|.json      fixed-hyperparameter search curves

Every stochastic step draws its seed from (master seed, dataset, purpose,
index), so interrupted campaigns resume without recomputation and two runs
with the same seed produce byte-identical CSV files at parallelism one.
runs.csv is written incrementally (flush per row) and re-sorted by run id
on completion, preserving the raw bytes of rows that already existed.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import (
    Dataset,
    DatasetManifestEntry,
    load_dataset,
    load_manifest,
    make_folds,
    preprocess,
    standardize_fold,
)
from .errors import DatasetError, ValidationError
from .fanova import ImportanceReport, aggregate_importance
from .forest import (
    Forest,
    N_TREES,
    assess_quality,
    fit_forest,
    load_forest,
    save_forest,
)
from .space import (
    DEFAULT_SPACE,
    HP_NAMES,
    RUNS_CSV_HEADER,
    RunRow,
    RunTable,
    STATUS_FAILED,
    STATUS_OK,
    run_row_from_csv,
    run_row_to_csv,
    sample_configuration,
)
from .training import train_fold
from .util import derive_seed, fmt_float, spearman
from .verification import VerificationResult, rank_curves, run_verification

logger = logging.getLogger("vqclab")

MIN_ROWS_FOR_ANALYSIS = 50

DESK_SCALE = {"n_configs": 200, "epochs": 30, "folds": 5, "max_features": 6}


@dataclass
class ExperimentManifest:
    """Resolved settings of one campaign invocation."""

    datasets_manifest: str
    out_dir: str
    n_configs: int = 1000
    epochs: int = 100
    folds: int = 10
    master_seed: int = 0
    jobs: int = 1
    max_features: Optional[int] = None

    def __post_init__(self):
        if min(self.n_configs, self.epochs, self.folds, self.jobs) < 1:
            raise ValidationError("counts and parallelism must be positive")
        Path(self.out_dir).mkdir(parents=True, exist_ok=True)


def desk_scale_manifest(manifest: ExperimentManifest) -> ExperimentManifest:
    return replace(manifest, **DESK_SCALE)


# --- sample-runs stage --------------------------------------------------------


def _prepare_datasets(manifest: ExperimentManifest) -> List[Dataset]:
    datasets = []
    for entry in load_manifest(manifest.datasets_manifest):
        try:
            table = load_dataset(entry.path, entry)
            ds = preprocess(table, entry)
        except DatasetError as exc:
            logger.warning("skipping dataset %s: %s", entry.name, exc)
            continue
        if manifest.max_features is not None and ds.num_features > manifest.max_features:
            logger.info(
                "skipping dataset %s: %d features exceeds the %d-feature cap",
                ds.name,
                ds.num_features,
                manifest.max_features,
            )
            continue
        datasets.append(ds)
    return datasets


def _read_existing_runs(path: Path) -> Dict[int, str]:
    """Raw csv lines of completed runs keyed by run id."""
    if not path.exists():
        return {}
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ",".join(RUNS_CSV_HEADER):
        raise DatasetError(f"{path}: unexpected header, refusing to resume")
    existing = {}
    for line in lines[1:]:
        if not line:
            continue
        row = run_row_from_csv(line)
        existing[row.run_id] = line
    return existing


# worker globals, set once per pool via the initializer (fork start method)
_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    _WORKER.update(payload)


def _train_run(run_id: int) -> Tuple[int, str, dict]:
    configs = _WORKER["configs"]
    fold_data = _WORKER["fold_data"]
    epochs = _WORKER["epochs"]
    master_seed = _WORKER["master_seed"]
    name = _WORKER["dataset_name"]

    config = configs[run_id]
    run_seed = derive_seed(master_seed, name, "run", run_id)
    fold_records = []
    for k, (X_train, y_train, X_test, y_test) in enumerate(fold_data):
        rec = train_fold(
            config,
            (X_train, y_train),
            (X_test, y_test),
            epochs=epochs,
            seed=derive_seed(run_seed, "fold", k),
        )
        fold_records.append(rec)
    ok = all(r.status == STATUS_OK for r in fold_records)
    y = float(np.mean([r.best_val_accuracy for r in fold_records])) if ok else None
    row = RunRow(
        run_id=run_id,
        config=config,
        y=y,
        status=STATUS_OK if ok else STATUS_FAILED,
        seed=run_seed,
    )
    record = {
        "run_id": run_id,
        "dataset": name,
        "seed": run_seed,
        "config": {k: _jsonable(v) for k, v in config.as_dict().items()},
        "y": y,
        "status": row.status,
        "folds": [r.to_dict() for r in fold_records],
    }
    return run_id, run_row_to_csv(row), record


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def run_dataset_campaign(ds: Dataset, manifest: ExperimentManifest) -> Path:
    """Sample, train and record all configurations for one dataset."""
    out = Path(manifest.out_dir) / ds.name
    records_dir = out / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    runs_path = out / "runs.csv"

    folds = make_folds(
        ds, k=manifest.folds, seed=derive_seed(manifest.master_seed, ds.name, "folds")
    )
    fold_data = [standardize_fold(ds, split) for split in folds]
    cfg_rng = np.random.default_rng(
        derive_seed(manifest.master_seed, ds.name, "configs")
    )
    configs = [sample_configuration(DEFAULT_SPACE, cfg_rng) for _ in range(manifest.n_configs)]

    existing = _read_existing_runs(runs_path)
    todo = [i for i in range(manifest.n_configs) if i not in existing]
    logger.info(
        "%s: %d runs total, %d already recorded, %d to train (jobs=%d)",
        ds.name,
        manifest.n_configs,
        len(existing),
        len(todo),
        manifest.jobs,
    )

    payload = {
        "configs": configs,
        "fold_data": fold_data,
        "epochs": manifest.epochs,
        "master_seed": manifest.master_seed,
        "dataset_name": ds.name,
    }
    fresh = not runs_path.exists()
    with open(runs_path, "a") as fh:
        if fresh:
            fh.write(",".join(RUNS_CSV_HEADER) + "\n")
            fh.flush()

        def record_result(run_id: int, line: str, record: dict) -> None:
            fh.write(line + "\n")
            fh.flush()
            existing[run_id] = line
            (records_dir / f"run_{run_id:05d}.json").write_text(
                json.dumps(record, sort_keys=True)
            )

        if manifest.jobs == 1 or len(todo) <= 1:
            _init_worker(payload)
            for i in todo:
                record_result(*_train_run(i))
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(
                processes=manifest.jobs, initializer=_init_worker, initargs=(payload,)
            ) as pool:
                for result in pool.imap_unordered(_train_run, todo):
                    record_result(*result)

    # normalize row order so completed campaigns are byte-stable
    body = [existing[i] for i in sorted(existing)]
    runs_path.write_text("\n".join([",".join(RUNS_CSV_HEADER)] + body) + "\n")
    return runs_path


def cmd_sample_runs(manifest: ExperimentManifest) -> List[Path]:
    """Run the sampling+training campaign for every usable dataset."""
    paths = []
    for ds in _prepare_datasets(manifest):
        started = time.monotonic()
        paths.append(run_dataset_campaign(ds, manifest))
        logger.info("%s: campaign done in %.1f s", ds.name, time.monotonic() - started)
    if not paths:
        logger.warning("no datasets were usable; nothing was trained")
    return paths


# --- analysis stage -----------------------------------------------------------


def read_run_table(path, dataset_name: str) -> RunTable:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing run table: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ",".join(RUNS_CSV_HEADER):
        raise DatasetError(f"{path}: unexpected runs.csv header")
    rows = [run_row_from_csv(line) for line in lines[1:] if line]
    rows.sort(key=lambda r: r.run_id)
    return RunTable(dataset=dataset_name, rows=rows)


def _campaign_dirs(out_dir: Path) -> List[Path]:
    return sorted(
        p for p in out_dir.iterdir() if p.is_dir() and (p / "runs.csv").exists()
    )


def _importance_csv_rows(name: str, report: ImportanceReport) -> List[str]:
    rows = []
    for u, frac in sorted(report.fractions.items()):
        subset = "|".join(report.names[d] for d in u)
        rng = fmt_float(report.marginal_range[u[0]]) if len(u) == 1 else ""
        rows.append(f"{name},{subset},{len(u)},{fmt_float(frac)},{rng}")
    return rows


def _verification_csv_rows(name: str, res: VerificationResult) -> List[str]:
    rows = []
    for d, hp in enumerate(res.hyperparameters):
        for t in range(res.iterations):
            rows.append(
                f"{name},{hp},{t + 1},{fmt_float(res.curves[d, t])},"
                f"{fmt_float(res.ranks[t, d])}"
            )
    return rows


def _median_importance_ranking(
    importance: Dict[str, ImportanceReport]
) -> List[Tuple[str, float]]:
    """Median singleton fraction across passing datasets, most important first."""
    by_name: Dict[str, List[float]] = {}
    for rep in importance.values():
        for u, f in rep.fractions.items():
            if len(u) == 1:
                by_name.setdefault(rep.names[u[0]], []).append(f)
    ranked = [(name, float(np.median(vals))) for name, vals in by_name.items()]
    ranked.sort(key=lambda kv: -kv[1])
    return ranked


def importance_levels(ranked: List[Tuple[str, float]], levels: int = 3) -> List[List[str]]:
    """Group a ranking into importance levels at its largest median gaps."""
    if len(ranked) <= levels:
        return [[name] for name, _ in ranked]
    gaps = [
        (ranked[i][1] - ranked[i + 1][1], i) for i in range(len(ranked) - 1)
    ]
    cuts = sorted(i for _, i in sorted(gaps, key=lambda g: -g[0])[: levels - 1])
    groups = []
    start = 0
    for cut in cuts + [len(ranked) - 1]:
        groups.append([name for name, _ in ranked[start : cut + 1]])
        start = cut + 1
    return groups


def cmd_analyze(manifest: ExperimentManifest) -> dict:
    """Gate surrogates, compute importance and verification for passing datasets."""
    out = Path(manifest.out_dir)
    dirs = _campaign_dirs(out)
    if not dirs:
        raise DatasetError(f"no campaign outputs (runs.csv) found under {out}")

    quality_doc: Dict[str, dict] = {}
    importance: Dict[str, ImportanceReport] = {}
    verifications: Dict[str, VerificationResult] = {}
    excluded: List[str] = []

    for ds_dir in dirs:
        name = ds_dir.name
        table = read_run_table(ds_dir / "runs.csv", name)
        n_ok = len(table.successful())
        n_failed = len(table.rows) - n_ok
        if n_ok < MIN_ROWS_FOR_ANALYSIS:
            logger.warning(
                "%s: only %d successful runs (< %d), excluded from analysis",
                name,
                n_ok,
                MIN_ROWS_FOR_ANALYSIS,
            )
            quality_doc[name] = {
                "passed": False,
                "reason": f"insufficient successful runs ({n_ok})",
                "n_rows": n_ok,
                "n_failed": n_failed,
            }
            excluded.append(name)
            continue

        q = assess_quality(
            table, k=10, seed=derive_seed(manifest.master_seed, name, "quality")
        )
        entry = q.to_dict()
        entry["n_failed"] = n_failed
        quality_doc[name] = entry
        if not q.passed:
            logger.warning(
                "%s: surrogate r2=%.4f below the gate, dataset excluded", name, q.r2
            )
            excluded.append(name)
            continue

        X, y = table.encoded()
        forest = fit_forest(
            X,
            y,
            DEFAULT_SPACE,
            seed=derive_seed(manifest.master_seed, name, "surrogate"),
            n_trees=N_TREES,
        )
        save_forest(forest, ds_dir / "forest.json")
        importance[name] = aggregate_importance(forest, max_order=2)
        verifications[name] = run_verification(
            forest, seed=derive_seed(manifest.master_seed, name, "verify")
        )
        logger.info("%s: passed gate (r2=%.4f), analyzed", name, q.r2)

    _write_quality(out, quality_doc, excluded)
    _write_importance(out, importance)
    _write_verification(out, importance, verifications)
    if not importance:
        logger.warning("no dataset passed the surrogate gate; quality report written")
    return {
        "quality": quality_doc,
        "excluded": excluded,
        "passed": sorted(importance),
    }


def _write_quality(out: Path, quality_doc: dict, excluded: List[str]) -> None:
    doc = {
        "r2_gate": 0.75,
        "excluded": sorted(excluded),
        "datasets": quality_doc,
    }
    (out / "quality.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _write_importance(out: Path, importance: Dict[str, ImportanceReport]) -> None:
    header = "dataset,subset,order,variance_fraction,marginal_range"
    lines = [header]
    for name in sorted(importance):
        lines.extend(_importance_csv_rows(name, importance[name]))
    (out / "importance.csv").write_text("\n".join(lines) + "\n")

    ranked = _median_importance_ranking(importance)
    doc = {
        "datasets": {name: rep.to_dict() for name, rep in importance.items()},
        "median_ranking": [
            {"hyperparameter": n, "median_fraction": f} for n, f in ranked
        ],
        "importance_levels": importance_levels(ranked),
    }
    (out / "importance.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _write_verification(
    out: Path,
    importance: Dict[str, ImportanceReport],
    verifications: Dict[str, VerificationResult],
) -> None:
    header = "dataset,hyperparameter,iteration,best_so_far,rank"
    lines = [header]
    for name in sorted(verifications):
        lines.extend(_verification_csv_rows(name, verifications[name]))
    (out / "verification.csv").write_text("\n".join(lines) + "\n")

    doc: dict = {"datasets": {}, "agreement_spearman": {}}
    for name in sorted(verifications):
        doc["datasets"][name] = verifications[name].to_dict()
        rep = importance.get(name)
        if rep is not None:
            fractions = [rep.fractions[(d,)] for d in range(len(rep.names))]
            doc["agreement_spearman"][name] = spearman(
                fractions, verifications[name].ranks[-1]
            )
    if verifications:
        report = rank_curves(verifications)
        doc["mean_final_rank"] = {
            name: float(r)
            for name, r in zip(report.hyperparameters, report.final_ranks)
        }
    (out / "verification.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def cmd_verify(manifest: ExperimentManifest) -> dict:
    """Re-run the verification searches from the saved surrogates."""
    out = Path(manifest.out_dir)
    verifications: Dict[str, VerificationResult] = {}
    importance: Dict[str, ImportanceReport] = {}
    for ds_dir in _campaign_dirs(out):
        forest_path = ds_dir / "forest.json"
        if not forest_path.exists():
            logger.info("%s: no saved surrogate, skipping", ds_dir.name)
            continue
        forest = load_forest(forest_path, DEFAULT_SPACE)
        verifications[ds_dir.name] = run_verification(
            forest, seed=derive_seed(manifest.master_seed, ds_dir.name, "verify")
        )
        importance[ds_dir.name] = aggregate_importance(forest, max_order=1)
    if not verifications:
        raise DatasetError(
            f"no saved surrogates under {out}; run the analyze stage first"
        )
    _write_verification(out, importance, verifications)
    return {"verified": sorted(verifications)}
