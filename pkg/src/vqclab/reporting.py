"""Human-readable campaign report: summary.md plus rendered figures.

Consumes the delimited analysis outputs and writes a Markdown summary next
to them, with matplotlib figures under <out>/figures/: per-dataset
performance distributions, importance fractions and marginal ranges, and
the verification rank curves.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DatasetError
from .orchestrator import _campaign_dirs, read_run_table
from .space import HP_NAMES

logger = logging.getLogger("vqclab")


def _require(path: Path, missing: List[str]) -> bool:
    if not path.exists():
        missing.append(str(path))
        return False
    return True


def _quartiles(values: np.ndarray) -> Dict[str, float]:
    return {
        "min": float(values.min()),
        "q1": float(np.percentile(values, 25)),
        "median": float(np.percentile(values, 50)),
        "q3": float(np.percentile(values, 75)),
        "max": float(values.max()),
    }


def _fig_performance(stats_y: Dict[str, np.ndarray], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(stats_y), 3.4))
    names = sorted(stats_y)
    ax.boxplot([stats_y[n] for n in names], tick_labels=names, whis=(0, 100))
    ax.set_ylabel("10-fold best validation accuracy")
    ax.set_title("Performance distribution per dataset")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _fig_importance(importance_doc: dict, key: str, ylabel: str, path: Path) -> None:
    per_hp: Dict[str, List[float]] = {name: [] for name in HP_NAMES}
    for ds_doc in importance_doc["datasets"].values():
        for name, entry in ds_doc["singles"].items():
            per_hp[name].append(entry[key])
    order = sorted(HP_NAMES, key=lambda n: np.median(per_hp[n]) if per_hp[n] else 0.0)
    fig, ax = plt.subplots(figsize=(7.5, 3.6))
    data = [per_hp[n] if per_hp[n] else [0.0] for n in order]
    ax.boxplot(data, tick_labels=order, whis=(0, 100))
    ax.set_ylabel(ylabel)
    ax.set_title("Hyperparameter importance (least to most)")
    ax.tick_params(axis="x", rotation=60, labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _fig_verification(verification_csv: Path, path: Path) -> None:
    curves: Dict[str, Dict[int, List[float]]] = {}
    with open(verification_csv) as fh:
        header = fh.readline().strip().split(",")
        idx = {c: i for i, c in enumerate(header)}
        for line in fh:
            cells = line.rstrip("\n").split(",")
            hp = cells[idx["hyperparameter"]]
            it = int(cells[idx["iteration"]])
            curves.setdefault(hp, {}).setdefault(it, []).append(
                float(cells[idx["rank"]])
            )
    if not curves:
        return
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    for hp in HP_NAMES:
        if hp not in curves:
            continue
        its = sorted(curves[hp])
        mean_rank = [float(np.mean(curves[hp][t])) for t in its]
        ax.plot(its, mean_rank, label=hp, linewidth=1.2)
    ax.set_xlabel("random search iteration")
    ax.set_ylabel("average rank (1 = best score)")
    ax.set_title("Fixed-hyperparameter search ranks")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _md_table(header: List[str], rows: List[List[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return lines


def cmd_report(out_dir) -> Path:
    """Write summary.md and figures from the campaign and analysis outputs."""
    out = Path(out_dir)
    missing: List[str] = []
    dirs = _campaign_dirs(out) if out.exists() else []
    if not dirs:
        raise DatasetError(
            f"no campaign outputs found: expected at least one runs.csv under {out}"
        )
    quality_path = out / "quality.json"
    importance_json = out / "importance.json"
    importance_csv = out / "importance.csv"
    verification_csv = out / "verification.csv"
    verification_json = out / "verification.json"
    for p in (quality_path, importance_json, importance_csv, verification_csv, verification_json):
        _require(p, missing)
    if missing:
        raise DatasetError(
            "analysis outputs missing, run the analyze stage first: "
            + ", ".join(missing)
        )

    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    quality = json.loads(quality_path.read_text())
    importance_doc = json.loads(importance_json.read_text())
    verification_doc = json.loads(verification_json.read_text())

    lines: List[str] = ["# Campaign summary", ""]

    # performance distributions
    stats_y: Dict[str, np.ndarray] = {}
    perf_rows = []
    for ds_dir in dirs:
        table = read_run_table(ds_dir / "runs.csv", ds_dir.name)
        ok = table.successful()
        n_failed = len(table.rows) - len(ok)
        if ok:
            y = np.array([r.y for r in ok])
            stats_y[ds_dir.name] = y
            q = _quartiles(y)
            perf_rows.append(
                [
                    ds_dir.name,
                    str(len(table.rows)),
                    str(n_failed),
                    f"{q['min']:.4f}",
                    f"{q['q1']:.4f}",
                    f"{q['median']:.4f}",
                    f"{q['q3']:.4f}",
                    f"{q['max']:.4f}",
                ]
            )
    lines.append("## Performance distributions")
    lines.append("")
    lines.extend(
        _md_table(
            ["dataset", "runs", "failed", "min", "q1", "median", "q3", "max"],
            perf_rows,
        )
    )
    lines.append("")
    if stats_y:
        _fig_performance(stats_y, figures / "performance_distributions.png")
        lines.append("![performance](figures/performance_distributions.png)")
        lines.append("")

    # surrogate quality, columns R2, RMSE, CC
    lines.append("## Surrogate quality")
    lines.append("")
    qrows = []
    for name in sorted(quality["datasets"]):
        entry = quality["datasets"][name]
        if "r2" in entry:
            qrows.append(
                [
                    name,
                    f"{entry['r2']:.4f}",
                    f"{entry['rmse']:.4f}",
                    f"{entry['spearman_cc']:.4f}",
                    "yes" if entry["passed"] else "no",
                ]
            )
        else:
            qrows.append([name, "-", "-", "-", f"no ({entry.get('reason', '?')})"])
    lines.extend(_md_table(["dataset", "R2", "RMSE", "CC", "passed"], qrows))
    lines.append("")
    if quality["excluded"]:
        lines.append(
            "Excluded from the importance study (gate R2 >= "
            f"{quality['r2_gate']}): {', '.join(quality['excluded'])}."
        )
        lines.append("")

    # importance
    lines.append("## Hyperparameter importance")
    lines.append("")
    ranking = importance_doc.get("median_ranking", [])
    if ranking:
        rows = [
            [str(i + 1), item["hyperparameter"], f"{item['median_fraction']:.4f}"]
            for i, item in enumerate(ranking)
        ]
        lines.extend(_md_table(["rank", "hyperparameter", "median variance fraction"], rows))
        lines.append("")
        levels = importance_doc.get("importance_levels", [])
        for i, group in enumerate(levels, start=1):
            lines.append(f"- Level {i}: {', '.join(group)}")
        lines.append("")
        _fig_importance(
            importance_doc,
            "fraction_mean",
            "variance fraction",
            figures / "importance_fractions.png",
        )
        _fig_importance(
            importance_doc,
            "marginal_range",
            "marginal range (max - min)",
            figures / "marginal_ranges.png",
        )
        lines.append("![fractions](figures/importance_fractions.png)")
        lines.append("")
        lines.append("![ranges](figures/marginal_ranges.png)")
        lines.append("")
    else:
        lines.append("No dataset passed the surrogate gate; importance unavailable.")
        lines.append("")

    # verification
    lines.append("## Verification by fixed-hyperparameter random search")
    lines.append("")
    final_rank = verification_doc.get("mean_final_rank", {})
    if final_rank:
        rows = [
            [name, f"{final_rank[name]:.2f}"]
            for name in sorted(final_rank, key=lambda n: -final_rank[n])
        ]
        lines.extend(
            _md_table(["hyperparameter", "mean rank at final iteration"], rows)
        )
        lines.append("")
        agreement = verification_doc.get("agreement_spearman", {})
        for name in sorted(agreement):
            lines.append(
                f"- {name}: Spearman agreement between variance fractions and "
                f"final verification ranks: {agreement[name]:.3f}"
            )
        lines.append("")
        _fig_verification(verification_csv, figures / "verification_ranks.png")
        lines.append("![ranks](figures/verification_ranks.png)")
        lines.append("")
    else:
        lines.append("No verification results available.")
        lines.append("")

    summary = out / "summary.md"
    summary.write_text("\n".join(lines))
    logger.info("wrote %s and figures under %s", summary, figures)
    return summary
