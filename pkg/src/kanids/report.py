"""Confusion counting, the four benchmark metrics, and result emission.

The positive class is always "attack" (label 1).  Undefined divisions
(empty denominator) return 0 by convention so a benchmark grid never
crashes on a degenerate run.  Alongside the plain binary metrics the
macro-averaged variants (mean of attack-as-positive and normal-as-positive)
are computed, since published intrusion tables are often macro-averaged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def merge(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn,
                         self.fp + other.fp, self.fn + other.fn)


def accumulate(conf: Confusion, predicted, actual) -> Confusion:
    """Add a batch of binary predictions to the running counts."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError(
            f"length mismatch: {predicted.shape} predictions vs {actual.shape} labels")
    p = predicted.astype(bool)
    a = actual.astype(bool)
    return Confusion(
        conf.tp + int(np.sum(p & a)),
        conf.tn + int(np.sum(~p & ~a)),
        conf.fp + int(np.sum(p & ~a)),
        conf.fn + int(np.sum(~p & a)),
    )


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(conf: Confusion) -> dict[str, float]:
    """Accuracy, precision, recall, F1 (attack positive) plus macro variants."""
    if conf.total < 1:
        raise ValueError("empty confusion: no samples accumulated")
    acc = (conf.tp + conf.tn) / conf.total
    prec = _safe_div(conf.tp, conf.tp + conf.fp)
    rec = _safe_div(conf.tp, conf.tp + conf.fn)
    f1 = _safe_div(2 * prec * rec, prec + rec)
    # swap the positive class to get the normal-side values
    prec_n = _safe_div(conf.tn, conf.tn + conf.fn)
    rec_n = _safe_div(conf.tn, conf.tn + conf.fp)
    f1_n = _safe_div(2 * prec_n * rec_n, prec_n + rec_n)
    return {
        "accuracy": acc,
        "precision": prec,
        "recall": rec,
        "f1": f1,
        "macro_precision": (prec + prec_n) / 2,
        "macro_recall": (rec + rec_n) / 2,
        "macro_f1": (f1 + f1_n) / 2,
    }


METRIC_KEYS = ("accuracy", "precision", "recall", "f1")


@dataclass
class RunReport:
    """Everything recorded about one (model, dataset) training run."""

    model_name: str
    dataset: str
    config: dict
    param_count: int
    epoch_losses: list[float] = field(default_factory=list)
    confusion: Confusion = field(default_factory=Confusion)
    metrics: dict[str, float] = field(default_factory=dict)
    wall_time_s: float = 0.0
    diverged: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def run_id(self) -> str:
        return f"{self.model_name}@{self.dataset}"

    def to_text(self) -> str:
        """Human-facing per-run document (includes wall time)."""
        lines = [
            f"run: {self.run_id}",
            f"model: {self.model_name}",
            f"dataset: {self.dataset}",
            f"diverged: {self.diverged}",
            f"param_count: {self.param_count}",
            f"wall_time_s: {self.wall_time_s:.3f}",
            "config:",
        ]
        for k in sorted(self.config):
            lines.append(f"  {k}: {self.config[k]!r}")
        lines.append("epoch_losses:")
        for e, loss in enumerate(self.epoch_losses):
            lines.append(f"  {e}: {loss!r}")
        c = self.confusion
        lines.append(f"confusion: tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}")
        lines.append("metrics:")
        for k in sorted(self.metrics):
            lines.append(f"  {k}: {self.metrics[k]!r}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        """Deterministic machine-readable record (no wall time)."""
        c = self.confusion
        return {
            "model": self.model_name,
            "dataset": self.dataset,
            "diverged": self.diverged,
            "param_count": self.param_count,
            "config": {k: self.config[k] for k in sorted(self.config)},
            "epoch_losses": list(self.epoch_losses),
            "confusion": {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn},
            "metrics": {k: self.metrics[k] for k in sorted(self.metrics)},
            "notes": list(self.notes),
        }


def _check_unique(reports: list[RunReport]) -> None:
    seen = set()
    for r in reports:
        if r.run_id in seen:
            raise ValueError(f"duplicate run id: {r.run_id}")
        seen.add(r.run_id)


def _fmt6(x: float) -> str:
    return f"{x:.6f}"


def results_table(reports: list[RunReport]) -> str:
    """Model x dataset grid of the four metrics, 2-decimal percent display."""
    _check_unique(reports)
    datasets = sorted({r.dataset for r in reports})
    models = []
    for r in reports:
        if r.model_name not in models:
            models.append(r.model_name)
    by_key = {(r.model_name, r.dataset): r for r in reports}

    header = ["Model"]
    for ds in datasets:
        header += [f"{ds}/{m}" for m in ("Acc", "Prec", "Rec", "F1")]
    header += ["Params", "Time(s)"]
    rows = [header]
    for model in models:
        row = [model]
        params = time_s = None
        for ds in datasets:
            r = by_key.get((model, ds))
            if r is None:
                row += ["-"] * 4
                continue
            row += [f"{100 * r.metrics[k]:.2f}" for k in METRIC_KEYS]
            params, time_s = r.param_count, r.wall_time_s
        row.append(str(params) if params is not None else "-")
        row.append(f"{time_s:.1f}" if time_s is not None else "-")
        rows.append(row)

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    out = []
    for row in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(out) + "\n"


def emit_results(reports: list[RunReport], out_dir) -> list[Path]:
    """Write the result table, the four plot-data files and the summary.

    Plot-data files are comma-delimited UTF-8 with a header row and
    6-decimal fixed-point numbers; together with ``summary.json`` they are
    fully deterministic (no timing fields).  The human-facing table and the
    per-run documents carry wall time as well.
    """
    if not reports:
        raise ValueError("empty report list: nothing to emit")
    _check_unique(reports)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name: str, text: str) -> None:
        path = out_dir / name
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"io failure writing {path}: {exc}") from exc
        written.append(path)

    write("results_table.txt", results_table(reports))

    datasets = sorted({r.dataset for r in reports})
    ordered = sorted(reports, key=lambda r: (r.dataset, r.model_name))

    # grouped-bar: long form, one row per (dataset, model, metric)
    lines = ["dataset,model,metric,value"]
    for r in ordered:
        for k in METRIC_KEYS:
            lines.append(f"{r.dataset},{r.model_name},{k},{_fmt6(r.metrics[k])}")
    write("grouped_bar.csv", "\n".join(lines) + "\n")

    # radar: one row per (dataset, model) with the four metric axes
    lines = ["dataset,model," + ",".join(METRIC_KEYS)]
    for r in ordered:
        vals = ",".join(_fmt6(r.metrics[k]) for k in METRIC_KEYS)
        lines.append(f"{r.dataset},{r.model_name},{vals}")
    write("radar.csv", "\n".join(lines) + "\n")

    # heatmap: model rows, dataset x metric columns
    models = []
    for r in ordered:
        if r.model_name not in models:
            models.append(r.model_name)
    by_key = {(r.model_name, r.dataset): r for r in reports}
    cols = [f"{ds}_{k}" for ds in datasets for k in METRIC_KEYS]
    lines = ["model," + ",".join(cols)]
    for model in models:
        cells = []
        for ds in datasets:
            r = by_key.get((model, ds))
            cells += [_fmt6(r.metrics[k]) if r else "" for k in METRIC_KEYS]
        lines.append(f"{model}," + ",".join(cells))
    write("heatmap.csv", "\n".join(lines) + "\n")

    # line: per-epoch training losses
    lines = ["dataset,model,epoch,loss"]
    for r in ordered:
        for e, loss in enumerate(r.epoch_losses):
            lines.append(f"{r.dataset},{r.model_name},{e},{_fmt6(loss)}")
    write("line.csv", "\n".join(lines) + "\n")

    summary = {r.run_id: r.to_record() for r in ordered}
    write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

    for r in ordered:
        write(f"run_{r.dataset}_{r.model_name}.txt", r.to_text())

    return written
