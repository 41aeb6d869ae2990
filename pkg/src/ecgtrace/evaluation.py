"""Confusion matrices, one-vs-rest metrics, confidence intervals, ROC/AUC and timing.

For class ``c`` of a K-class confusion matrix (rows = truth, columns =
prediction), ``TP = M[c, c]``, ``FN = row_c - TP``, ``FP = col_c - TP`` and
``TN`` is everything else. A metric whose denominator is zero is reported as
0 and the class is listed in ``degenerate``.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, FoldCountMismatch, LabelOutOfRange, LengthMismatch, SingleClass, ZeroN

Z_95 = 1.96
METRICS = ("precision", "sensitivity", "specificity", "f1")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if self.k != other.k:
            raise FoldCountMismatch(f"cannot add {self.k}- and {other.k}-class matrices")
        return ConfusionMatrix(self.counts + other.counts)


def confusion(true_labels, predicted_labels, k: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} true labels vs {p.size} predictions")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class ClassMetrics:
    accuracy: float
    per_class: dict[str, np.ndarray]
    support: np.ndarray
    degenerate: list[tuple[int, str]] = field(default_factory=list)


def _ratio(num, den):
    return num / den if den else 0.0


def per_class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    m = cm.counts
    total = m.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    out = {name: np.zeros(cm.k) for name in METRICS}
    degenerate = []
    for c in range(cm.k):
        tp = int(m[c, c])
        fn = int(m[c, :].sum()) - tp
        fp = int(m[:, c].sum()) - tp
        tn = int(total) - tp - fn - fp
        for name, num, den in (
            ("sensitivity", tp, tp + fn),
            ("specificity", tn, tn + fp),
            ("precision", tp, tp + fp),
            ("f1", 2 * tp, 2 * tp + fn + fp),
        ):
            if den == 0:
                degenerate.append((c, name))
            out[name][c] = _ratio(num, den)
    return ClassMetrics(float(np.trace(m) / total), out, m.sum(axis=1).astype(np.int64), degenerate)


def weighted_metrics(per_class: dict[str, np.ndarray], supports) -> dict[str, float]:
    s = np.asarray(supports, dtype=np.float64)
    if s.sum() <= 0:
        raise ValueError("supports must sum to a positive number")
    # Explicit loop keeps summation order fixed (and independent of BLAS).
    out = {}
    for name, values in per_class.items():
        acc = 0.0
        for w, v in zip(s, np.asarray(values, dtype=np.float64)):
            acc += w * v
        out[name] = acc / s.sum()
    return out


def ci_halfwidth(metric: float, n: int, z: float = Z_95) -> float:
    """Normal-approximation half-width ``z * sqrt(metric * (1 - metric) / n)``."""
    if n <= 0:
        raise ZeroN("confidence interval needs N > 0")
    if not 0.0 <= metric <= 1.0:
        raise ValueError("metric must lie in [0, 1]")
    return z * math.sqrt(metric * (1.0 - metric) / n)


@dataclass
class MetricsReport:
    class_names: tuple[str, ...]
    confusion: ConfusionMatrix
    accuracy: float
    per_class: dict[str, list[float]]
    weighted: dict[str, float]
    ci: dict[str, float]
    n: int
    degenerate: list[tuple[int, str]] = field(default_factory=list)
    auc: dict[str, float] | None = None

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "class_names": list(self.class_names),
            "accuracy": self.accuracy,
            "weighted": dict(self.weighted),
            "ci95_halfwidth": dict(self.ci),
            "per_class": {
                name: {metric: self.per_class[metric][i] for metric in METRICS}
                | {"support": int(self.confusion.counts[i].sum())}
                for i, name in enumerate(self.class_names)
            },
            "confusion": self.confusion.counts.tolist(),
            "degenerate": [[self.class_names[c], m] for c, m in self.degenerate],
        }
        if self.auc is not None:
            d["auc"] = dict(self.auc)
        return d


def build_report(cm: ConfusionMatrix, class_names=None, z: float = Z_95) -> MetricsReport:
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(cm.k))
    if len(names) != cm.k:
        raise LengthMismatch(f"{len(names)} class names for a {cm.k}-class matrix")
    cls = per_class_metrics(cm)
    weighted = weighted_metrics(cls.per_class, cls.support)
    n = cm.total
    ci = {"accuracy": ci_halfwidth(cls.accuracy, n, z)}
    ci.update({name: ci_halfwidth(min(max(v, 0.0), 1.0), n, z) for name, v in weighted.items()})
    return MetricsReport(
        class_names=names,
        confusion=cm,
        accuracy=cls.accuracy,
        per_class={k: [float(v) for v in vals] for k, vals in cls.per_class.items()},
        weighted=weighted,
        ci=ci,
        n=n,
        degenerate=cls.degenerate,
    )


def aggregate_folds(reports, expected_folds: int | None = None) -> MetricsReport:
    """Pool fold results by summing confusion matrices and recomputing every metric."""
    reports = list(reports)
    if not reports:
        raise FoldCountMismatch("no fold reports to aggregate")
    if expected_folds is not None and len(reports) != expected_folds:
        raise FoldCountMismatch(f"expected {expected_folds} fold reports, got {len(reports)}")
    names = reports[0].class_names
    if any(r.class_names != names for r in reports):
        raise FoldCountMismatch("fold reports use different class sets")
    pooled = reports[0].confusion
    for r in reports[1:]:
        pooled = pooled + r.confusion
    return build_report(pooled, names)


# ---------------------------------------------------------------------------
# ROC


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _trapezoid(x, y) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def roc_auc(scores, labels, direction: int = 1) -> RocCurve:
    """ROC of binary ``labels`` (1 = positive) ranked by ``scores``.

    ``direction=-1`` treats lower scores as more positive. Equal scores share
    one threshold, so ties contribute a diagonal segment.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1) * (1 if direction >= 0 else -1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both positive and negative samples")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last_of_group]] * (1 if direction >= 0 else -1)
    return RocCurve(fpr, tpr, thresholds, _trapezoid(fpr, tpr))


def roc_one_vs_rest(probabilities, labels, k: int) -> dict[str, RocCurve]:
    """Per-class one-vs-rest curves plus a ``micro`` average over all (sample, class) pairs."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    onehot = np.eye(k, dtype=bool)[y]
    curves = {}
    for c in range(k):
        if 0 < onehot[:, c].sum() < len(y):
            curves[str(c)] = roc_auc(p[:, c], onehot[:, c])
    curves["micro"] = roc_auc(p.reshape(-1), onehot.reshape(-1))
    return curves


# ---------------------------------------------------------------------------
# timing


@dataclass
class Timing:
    median: float
    variance: float
    samples: list[float]


def time_inference(backend, image, repeats: int = 10, warmup: int = 1) -> Timing:
    """Seconds per single-image ``predict_proba`` call (median of ``repeats``)."""
    batch = [image] if isinstance(image, str) else np.asarray(image)[None]
    for _ in range(warmup):
        backend.predict_proba(batch)
    samples = []
    for _ in range(repeats):
        t1 = time.perf_counter()
        backend.predict_proba(batch)
        t2 = time.perf_counter()
        samples.append(t2 - t1)
    var = statistics.pvariance(samples) if len(samples) > 1 else 0.0
    return Timing(statistics.median(samples), var, samples)
