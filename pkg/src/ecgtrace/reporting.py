"""JSON/CSV writers for report bundles. Output is deterministic for equal inputs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
    return path


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    return path, fh, csv.writer(fh, lineterminator="\n")


def write_confusion_csv(path, cm, class_names) -> Path:
    path, fh, w = _writer(path)
    with fh:
        w.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, cm.counts):
            w.writerow([name] + [int(v) for v in row])
    return path


def write_roc_csv(path, curves: dict, class_names) -> Path:
    """Long format: ``curve, threshold, fpr, tpr`` with one block per curve."""
    path, fh, w = _writer(path)
    with fh:
        w.writerow(["curve", "threshold", "fpr", "tpr"])
        for key, curve in curves.items():
            label = class_names[int(key)] if key.isdigit() else key
            for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
                w.writerow([label, repr(float(t)), repr(float(f)), repr(float(r))])
    return path


def write_history_csv(path, history) -> Path:
    path, fh, w = _writer(path)
    with fh:
        w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.val_loss), repr(h.train_acc), repr(h.val_acc)])
    return path


def write_rows_csv(path, rows: list[dict]) -> Path:
    path, fh, w = _writer(path)
    with fh:
        if rows:
            keys = list(rows[0])
            w.writerow(keys)
            for r in rows:
                w.writerow([r[k] for k in keys])
    return path


def summary_text(report, title: str = "") -> str:
    pct = lambda v: f"{100 * v:6.2f}"  # noqa: E731
    lines = []
    if title:
        lines += [title, "=" * len(title)]
    lines.append(f"test samples: {report.n}")
    lines.append(f"accuracy     {pct(report.accuracy)} +/- {100 * report.ci['accuracy']:.2f}")
    for name in ("precision", "sensitivity", "f1", "specificity"):
        lines.append(f"w-{name:<11}{pct(report.weighted[name])} +/- {100 * report.ci[name]:.2f}")
    if report.auc:
        lines.append("AUC          " + "  ".join(f"{k}={v:.4f}" for k, v in report.auc.items()))
    lines.append("")
    lines.append(f"{'class':<14}{'support':>8}{'prec':>8}{'sens':>8}{'spec':>8}{'f1':>8}")
    for i, name in enumerate(report.class_names):
        pc = report.per_class
        lines.append(
            f"{name:<14}{int(report.confusion.counts[i].sum()):>8}"
            f"{pct(pc['precision'][i]):>8}{pct(pc['sensitivity'][i]):>8}"
            f"{pct(pc['specificity'][i]):>8}{pct(pc['f1'][i]):>8}"
        )
    if report.degenerate:
        lines.append("")
        lines.append("zero-denominator metrics (reported as 0): "
                     + ", ".join(f"{report.class_names[c]}:{m}" for c, m in report.degenerate))
    return "\n".join(lines) + "\n"
