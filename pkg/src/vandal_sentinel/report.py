"""Ablation evaluation and report rendering.

Trains one model per feature-group combination on the train split, scores
the held-out test split, and emits a report in four shapes: JSON, a plain
text table, per-combination curve CSVs, and matplotlib figures rendered
next to the CSVs. Reference results from the published full-scale Wikidata
study are carried along as context rows; they are not reproducible from
desk-scale synthetic corpora and are never treated as targets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .corpus import CorpusRecord
from .errors import DataError, MissingReport, SingleClass
from .features import (
    SCHEMA_VERSION,
    group_indices,
    parse_group_spec,
    group_spec_label,
)
from .forest import ForestParams, TrainedModel, predict_proba, train
from .metrics import (
    filter_curve,
    filter_rate_at_recall,
    max_recall_with_filter,
    pr_auc,
    pr_curve,
    roc_auc,
)

DEFAULT_COMBOS = (
    "general",
    "general,context",
    "general,type,context",
    "general,user",
    "all",
)

# Results reported for the production-scale 2015 Wikidata corpus (~500k
# edits). Context rows only: desk-scale synthetic corpora cannot and should
# not reproduce them.
REFERENCE_RESULTS = (
    {"groups": "general", "roc_auc": 0.777, "pr_auc": 0.010, "filter_rate": 0.936, "at_recall": 0.62},
    {"groups": "general,context", "roc_auc": 0.803, "pr_auc": 0.013, "filter_rate": 0.937, "at_recall": 0.67},
    {"groups": "general,type,context", "roc_auc": 0.813, "pr_auc": 0.014, "filter_rate": 0.940, "at_recall": 0.68},
    {"groups": "general,user", "roc_auc": 0.927, "pr_auc": 0.387, "filter_rate": 0.985, "at_recall": 0.86},
    {"groups": "all", "roc_auc": 0.941, "pr_auc": 0.403, "filter_rate": 0.982, "at_recall": 0.89},
)


@dataclass
class ComboResult:
    groups: str
    roc_auc: float = 0.0
    pr_auc: float = 0.0
    filter_rate: float = 0.0
    achieved_recall: float = 0.0
    threshold: float = 0.0
    no_threshold: bool = False
    error: Optional[str] = None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    rows: list
    curves: dict  # combo label -> {"pr": [(recall, precision, thr)], "filter": [...]}
    config: dict
    reference: tuple = REFERENCE_RESULTS

    def to_json_dict(self) -> dict:
        return {
            "rows": [row.to_json_dict() for row in self.rows],
            "curves": self.curves,
            "config": self.config,
            "reference": list(self.reference),
        }


def matrices_from_records(records: Sequence[CorpusRecord]):
    """Full 53-column matrix, labels, and split masks from corpus records."""
    featured = [r for r in records if r.features is not None]
    if not featured:
        raise DataError("corpus has no feature vectors; rebuild with features")
    X = np.array([r.features.values for r in featured], dtype=np.float64)
    y = np.array([r.label for r in featured], dtype=np.int8)
    train_mask = np.array([r.split == "train" for r in featured], dtype=bool)
    test_mask = np.array([r.split == "test" for r in featured], dtype=bool)
    return X, y, train_mask, test_mask


def evaluate_model(
    model: TrainedModel,
    X_test_full: np.ndarray,
    y_test: np.ndarray,
    target_recall: Optional[float] = None,
) -> tuple[ComboResult, dict]:
    probs = predict_proba(model, model.select(X_test_full))
    pairs = list(zip(probs.tolist(), (np.asarray(y_test) == 1).tolist()))
    recall_goal = target_recall if target_recall is not None else max_recall_with_filter(pairs)
    fr = filter_rate_at_recall(pairs, recall_goal)
    row = ComboResult(
        groups=model.group_spec,
        roc_auc=roc_auc(pairs),
        pr_auc=pr_auc(pairs),
        filter_rate=fr.filter_rate,
        achieved_recall=fr.achieved_recall,
        threshold=fr.threshold,
        no_threshold=fr.no_threshold,
    )
    curves = {"pr": pr_curve(pairs), "filter": filter_curve(pairs)}
    return row, curves


def ablation_run(
    records: Sequence[CorpusRecord],
    params: ForestParams,
    combos: Sequence[str] = DEFAULT_COMBOS,
    target_recall: Optional[float] = None,
) -> tuple[EvalReport, dict]:
    """Train and evaluate one model per group combination.

    Returns the report plus the trained models keyed by combo label. A combo
    that fails to train is reported with its error; the rest continue.
    """
    X, y, train_mask, test_mask = matrices_from_records(records)
    if not train_mask.any() or not test_mask.any():
        raise DataError("corpus needs assigned train and test splits")

    rows = []
    curves = {}
    models = {}
    for combo in combos:
        groups = parse_group_spec(combo)
        label = group_spec_label(groups)
        indices = group_indices(groups)
        try:
            model = train(
                X[train_mask][:, list(indices)],
                y[train_mask],
                params,
                group_spec=label,
                feature_indices=indices,
            )
            row, combo_curves = evaluate_model(model, X[test_mask], y[test_mask], target_recall)
        except SingleClass as exc:
            rows.append(ComboResult(groups=label, error=str(exc)))
            continue
        rows.append(row)
        curves[label] = combo_curves
        models[label] = model

    config = {
        "params": params.to_json_dict(),
        "feature_schema_version": SCHEMA_VERSION,
        "n_train": int(train_mask.sum()),
        "n_test": int(test_mask.sum()),
        "test_prevalence": float(y[test_mask].mean()) if test_mask.any() else 0.0,
        "target_recall": target_recall,
        "combos": list(combos),
        "note": (
            "forest defaults are declared assumptions; the source study reports "
            "no hyper-parameters"
        ),
    }
    return EvalReport(rows=rows, curves=curves, config=config), models


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_text_table(report: EvalReport) -> str:
    lines = []
    header = f"{'features':<24} {'ROC-AUC':>8} {'PR-AUC':>8} {'filter-rate':>24}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        if row.error:
            lines.append(f"{row.groups:<24} failed: {row.error}")
            continue
        fr = f"{row.filter_rate:.3f} at {row.achieved_recall:.2f} recall"
        if row.no_threshold:
            fr += " [no usable threshold]"
        lines.append(f"{row.groups:<24} {row.roc_auc:>8.3f} {row.pr_auc:>8.3f} {fr:>24}")
    lines.append("")
    lines.append("reference results (full-scale 2015 Wikidata corpus, for context only):")
    for ref in report.reference:
        fr = f"{ref['filter_rate']:.3f} at {ref['at_recall']:.2f} recall"
        lines.append(
            f"{ref['groups']:<24} {ref['roc_auc']:>8.3f} {ref['pr_auc']:>8.3f} {fr:>24} [reference]"
        )
    lines.append("")
    lines.append(f"config: {json.dumps(report.config, sort_keys=True)}")
    return "\n".join(lines)


def _combo_slug(label: str) -> str:
    return label.replace(",", "+")


def _write_curve_csv(path: Path, rows, value_name: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["recall", value_name, "threshold"])
        for recall, value, threshold in rows:
            writer.writerow([f"{recall:.10g}", f"{value:.10g}", f"{threshold:.10g}"])


def _plot_curves(report: EvalReport, out_dir: Path) -> list[Path]:
    written = []
    panels = (
        ("pr", "precision", "Precision/recall by feature group", "pr_curves.png"),
        ("filter", "filter rate", "Filter-rate/recall by feature group", "filter_curves.png"),
    )
    for key, ylabel, title, filename in panels:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for label, combo_curves in report.curves.items():
            rows = combo_curves[key]
            xs = [r[0] for r in rows]
            ys = [r[1] for r in rows]
            ax.step(xs, ys, where="post", label=label, linewidth=1.4)
        ax.set_xlabel("recall")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def write_report_files(report: EvalReport, out_dir) -> dict:
    """Write report.json, report.txt, per-combo curve CSVs, and figures.

    Returns a manifest-friendly dict of everything written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}

    report_json = out_dir / "report.json"
    report_json.write_text(
        json.dumps(report.to_json_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )
    artifacts["report_json"] = str(report_json)

    report_txt = out_dir / "report.txt"
    report_txt.write_text(render_text_table(report) + "\n", encoding="utf-8")
    artifacts["report_txt"] = str(report_txt)

    csv_paths = []
    for label, combo_curves in report.curves.items():
        slug = _combo_slug(label)
        pr_path = out_dir / f"{slug}_pr.csv"
        _write_curve_csv(pr_path, combo_curves["pr"], "precision")
        filter_path = out_dir / f"{slug}_filter.csv"
        _write_curve_csv(filter_path, combo_curves["filter"], "filter_rate")
        csv_paths.extend([str(pr_path), str(filter_path)])
    artifacts["curve_csvs"] = csv_paths

    artifacts["figures"] = [str(p) for p in _plot_curves(report, out_dir)]
    return artifacts


def load_report(out_dir) -> EvalReport:
    path = Path(out_dir) / "report.json"
    if not path.exists():
        raise MissingReport(f"no report.json under {out_dir}")
    data = json.loads(path.read_text(encoding="utf-8"))
    rows = [ComboResult(**row) for row in data["rows"]]
    curves = {
        label: {key: [tuple(point) for point in rows_] for key, rows_ in combo.items()}
        for label, combo in data["curves"].items()
    }
    return EvalReport(rows=rows, curves=curves, config=data["config"], reference=tuple(data["reference"]))
