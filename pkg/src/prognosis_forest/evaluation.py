"""Held-out evaluation with and without uncertain predictions, and report files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datasets import ALIVE, DEAD, Dataset
from .ensemble import Forest
from .metrics import ConfusionMatrix, class_f_beta, confusion, roc_auc
from .uncertainty import triage_codes

REPORT_KEYS = ("dataset", "complete", "no_uncertain", "uncertain_fraction", "threshold", "provenance")


@dataclass
class ViewMetrics:
    n: int
    f2_alive: float
    f2_dead: float
    macro_f2: float
    roc_auc: float | None  # None when the view holds a single class
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = self.confusion.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ViewMetrics":
        return cls(**{**d, "confusion": ConfusionMatrix(**d["confusion"])})


def view_metrics(y_true, y_pred, p_dead) -> ViewMetrics:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    f_alive = class_f_beta(y_true, y_pred, ALIVE)
    f_dead = class_f_beta(y_true, y_pred, DEAD)
    both = len(np.unique(y_true)) == 2
    return ViewMetrics(
        n=len(y_true),
        f2_alive=f_alive,
        f2_dead=f_dead,
        macro_f2=(f_alive + f_dead) / 2,
        roc_auc=roc_auc(p_dead, y_true) if both else None,
        confusion=confusion(y_true, y_pred),
    )


@dataclass
class EvalReport:
    dataset: dict  # phase, day, form
    complete: ViewMetrics
    no_uncertain: ViewMetrics
    uncertain_fraction: float
    threshold: float | None
    provenance: dict = field(default_factory=dict)

    @property
    def macro_f2(self) -> float:
        return self.complete.macro_f2

    def to_dict(self) -> dict:
        return {
            "dataset": dict(self.dataset),
            "complete": self.complete.to_dict(),
            "no_uncertain": self.no_uncertain.to_dict(),
            "uncertain_fraction": self.uncertain_fraction,
            "threshold": self.threshold,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        validate_report(d)
        return cls(
            dataset=d["dataset"],
            complete=ViewMetrics.from_dict(d["complete"]),
            no_uncertain=ViewMetrics.from_dict(d["no_uncertain"]),
            uncertain_fraction=d["uncertain_fraction"],
            threshold=d["threshold"],
            provenance=d["provenance"],
        )


class ReportSchemaError(ValueError):
    pass


def validate_report(d: dict) -> None:
    missing = [k for k in REPORT_KEYS if k not in d]
    if missing:
        raise ReportSchemaError(f"report lacks {', '.join(missing)}")
    prov = d["provenance"]
    if not isinstance(prov, dict) or not {"tool_version", "config_hash", "seed"} <= prov.keys():
        raise ReportSchemaError("report provenance must carry tool_version, config_hash and seed")


def evaluate(forest: Forest, test: Dataset, provenance: dict | None = None) -> EvalReport:
    """Metrics over every test sample (argmax labels) and over the samples the
    threshold keeps.  ROC-AUC always scores the raw P(dead)."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.rows.shape[1] != forest.n_features:
        raise ValueError(f"dataset width {test.rows.shape[1]} != model width {forest.n_features}")
    proba = forest.predict_proba(test.rows)
    threshold = forest.threshold
    if threshold is None:
        pred = (proba[:, DEAD] >= proba[:, ALIVE]).astype(np.int64)
        uncertain = np.zeros(len(test), dtype=bool)
    else:
        pred, uncertain = triage_codes(proba, threshold)
    keep = ~uncertain
    y = test.labels
    return EvalReport(
        dataset={"phase": test.phase, "day": test.day, "form": test.form},
        complete=view_metrics(y, pred, proba[:, DEAD]),
        no_uncertain=view_metrics(y[keep], pred[keep], proba[keep, DEAD]),
        uncertain_fraction=float(uncertain.mean()),
        threshold=threshold,
        provenance=dict(provenance if provenance is not None else forest.provenance),
    )


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}"


def report_markdown(report: EvalReport) -> str:
    ds = report.dataset
    lines = [
        f"# Evaluation: phase {ds.get('phase')}, day {ds.get('day')}, form {ds.get('form')}",
        "",
        f"Uncertain: {_pct(report.uncertain_fraction)}%  (threshold {report.threshold})",
        "",
    ]
    for title, view in (("Complete", report.complete), ("No Unc", report.no_uncertain)):
        cm = view.confusion.as_grid()
        lines += [
            f"## {title}",
            "",
            "| n | F2 alive | F2 dead | macro F2 | ROC-AUC |",
            "|---|---|---|---|---|",
            f"| {view.n} | {_pct(view.f2_alive)} | {_pct(view.f2_dead)} | "
            f"{_pct(view.macro_f2)} | {_pct(view.roc_auc)} |",
            "",
            "| true \\ predicted | alive | dead |",
            "|---|---|---|",
            f"| alive | {cm[0][0]} | {cm[0][1]} |",
            f"| dead | {cm[1][0]} | {cm[1][1]} |",
            "",
        ]
    return "\n".join(lines)


def emit_report(report: EvalReport, path: str | Path, format: str = "json") -> Path:
    """Write the report as JSON or as Markdown tables (one per view)."""
    path = Path(path)
    if format == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif format in ("md", "markdown"):
        text = report_markdown(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
