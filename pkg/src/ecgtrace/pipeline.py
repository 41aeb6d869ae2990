"""Fold-by-fold experiment: preprocess, augment the training split, train, evaluate, explain.

Output layout under the run directory::

    run_config.json  manifest.json  fold_plan.json  split_counts.csv
    fold_<f>/  augment_plan.json params.json history.csv metrics.json
               confusion.csv roc.csv predictions.csv [*.png]
    pooled/    metrics.json confusion.csv roc.csv predictions.csv summary.txt [*.png]
    timing.json
    scorecam/  <id>_heatmap.png <id>_overlay.png <id>.json
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import reporting
from .augment import augment_class, plan_balance
from .config import RunConfig
from .dataset import FoldPlan, LabelScheme, counts, ingest, map_labels, split_kfold
from .errors import LeakageError, PipelineError
from .evaluation import (
    MetricsReport, aggregate_folds, build_report, confusion, roc_one_vs_rest, time_inference,
)
from .imgproc import ImageU8, channel_stats, load_image, preprocess, zscore
from .model import CNNBackend, reference_spec, save_checkpoint, train, write_predictions
from .scorecam import CamSample, cam_report

log = logging.getLogger(__name__)


class StageError(PipelineError):
    """Wraps a user-facing error with the fold and stage it came from."""


@dataclass
class FoldOutcome:
    report: MetricsReport
    ids: list[str]
    labels: np.ndarray
    probabilities: np.ndarray


@contextmanager
def _stage(fold, stage):
    where = f"fold {fold}, {stage}" if fold is not None else stage
    try:
        yield
    except StageError:
        raise
    except PipelineError as exc:
        raise StageError(f"[{where}] {exc}") from exc


def attach_auc(report: MetricsReport, curves: dict) -> MetricsReport:
    report.auc = {
        (report.class_names[int(k)] if k.isdigit() else k): float(c.auc) for k, c in curves.items()
    }
    return report


def write_eval_bundle(out: Path, report: MetricsReport, curves: dict, ids, probabilities,
                      figures: bool, title: str) -> None:
    names = report.class_names
    reporting.write_json(out / "metrics.json", report.to_dict())
    reporting.write_confusion_csv(out / "confusion.csv", report.confusion, names)
    reporting.write_roc_csv(out / "roc.csv", curves, names)
    write_predictions(out / "predictions.csv", ids, probabilities)
    (out / "summary.txt").write_text(reporting.summary_text(report, title))
    if figures:
        from . import plotting

        plotting.plot_confusion(report.confusion, names, out / "confusion.png", title=f"{title}: confusion")
        plotting.plot_roc(curves, names, out / "roc.png", title=f"{title}: ROC")


def evaluate_predictions(ids, labels, probabilities, class_names) -> tuple[MetricsReport, dict]:
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(probabilities).argmax(axis=1)
    report = build_report(confusion(labels, preds, len(class_names)), class_names)
    curves = {}
    try:
        curves = roc_one_vs_rest(probabilities, labels, len(class_names))
    except PipelineError as exc:
        log.warning("ROC skipped: %s", exc)
    return attach_auc(report, curves), curves


def pool_outcomes(outcomes: list[FoldOutcome], class_names, k: int):
    pooled = aggregate_folds([o.report for o in outcomes], expected_folds=k)
    ids = [i for o in outcomes for i in o.ids]
    labels = np.concatenate([o.labels for o in outcomes])
    probs = np.concatenate([o.probabilities for o in outcomes])
    _, curves = evaluate_predictions(ids, labels, probs, class_names)
    pooled = attach_auc(pooled, curves)
    return pooled, curves, ids, probs


def check_no_leakage(sources, fold) -> None:
    """Every training sample (original or replica) must come from a training index."""
    train = set(fold.train)
    held_out = set(fold.val) | set(fold.test)
    bad = [s for s in sources if s not in train or s in held_out]
    if bad:
        raise LeakageError(f"{len(bad)} training samples derive from validation/test indices")


def build_training_set(images: list[ImageU8], labels: np.ndarray, fold, class_names, cfg: RunConfig, fold_idx: int):
    train_idx = list(fold.train)
    by_class = {name: [i for i in train_idx if labels[i] == c] for c, name in enumerate(class_names)}
    by_class = {name: idx for name, idx in by_class.items() if idx}
    overrides = dict(cfg.augment.overrides)
    if not cfg.augment.enabled:
        overrides = {name: 1 for name in by_class}
    plan = plan_balance({n: len(v) for n, v in by_class.items()}, cfg.augment.target, overrides,
                        seed=cfg.seeds.augment + fold_idx)
    out_images, out_labels, sources = [], [], []
    for name, idx in by_class.items():
        entry = plan[name]
        out_images += augment_class([images[i] for i in idx], entry)
        c = class_names.index(name)
        out_labels += [c] * entry.total
        sources += idx + [idx[src] for src, _ in entry.replicas]
    check_no_leakage(sources, fold)
    return out_images, np.asarray(out_labels, dtype=np.int64), plan


def _tensors(images, stats, dtype=np.float32):
    return np.stack([zscore(im, stats) for im in images]).astype(dtype)


def run_experiment(cfg: RunConfig, out_dir=None) -> MetricsReport:
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scheme = LabelScheme.parse(cfg.scheme)
    reporting.write_json(out / "run_config.json", cfg.to_dict())

    with _stage(None, "ingest"):
        manifest = ingest(cfg.dataset_root)
    (out / "manifest.json").write_text(manifest.to_json())
    data = map_labels(manifest, scheme)
    names = list(data.class_names)
    with _stage(None, "split"):
        plan = split_kfold(data, cfg.k, cfg.val_frac, cfg.seeds.split)
    (out / "fold_plan.json").write_text(plan.to_json())
    reporting.write_rows_csv(out / "split_counts.csv", counts(plan, data))

    with _stage(None, "preprocess"):
        images = [preprocess(load_image(manifest.root + "/" + p), cfg.image_size, cfg.channels) for p in data.paths]
    labels = data.labels
    spec = reference_spec((cfg.channels, cfg.image_size, cfg.image_size), len(names), cfg.train.dropout)

    outcomes, backends = [], []
    for f, fold in enumerate(plan.folds):
        fdir = out / f"fold_{f}"
        with _stage(f, "augment"):
            tr_images, tr_labels, aug_plan = build_training_set(images, labels, fold, names, cfg, f)
        fdir.mkdir(parents=True, exist_ok=True)
        (fdir / "augment_plan.json").write_text(aug_plan.to_json())
        if not fold.val:
            raise StageError(f"[fold {f}, train] validation split is empty; raise val_frac")
        stats = channel_stats(tr_images) if cfg.zscore == "dataset" else None
        x_tr = _tensors(tr_images, stats)
        x_va = _tensors([images[i] for i in fold.val], stats)
        x_te = _tensors([images[i] for i in fold.test], stats)
        y_va = labels[list(fold.val)]
        y_te = labels[list(fold.test)]
        tcfg = replace(cfg.train, seed=cfg.seeds.train + f)
        with _stage(f, "train"):
            result = train(spec, (x_tr, tr_labels), (x_va, y_va), tcfg)
        extra = {
            "image_size": cfg.image_size, "channels": cfg.channels, "class_names": names,
            "zscore": cfg.zscore, "fold": f, "best_epoch": result.best_epoch,
            "zscore_stats": None if stats is None else [list(map(float, s)) for s in stats],
        }
        save_checkpoint(fdir / "params.json", spec, result.params, extra)
        reporting.write_history_csv(fdir / "history.csv", result.history)

        backend = CNNBackend(spec, result.params)
        probs = backend.predict_proba(x_te)
        ids = [data.ids[i] for i in fold.test]
        with _stage(f, "evaluate"):
            report, curves = evaluate_predictions(ids, y_te, probs, names)
        write_eval_bundle(fdir, report, curves, ids, probs, cfg.figures, f"fold {f}")
        if cfg.figures:
            from . import plotting

            plotting.plot_history(result.history, fdir / "loss.png", title=f"fold {f}: loss")
        outcomes.append(FoldOutcome(report, ids, y_te, probs))
        backends.append((backend, x_te, fold, stats))
        log.info("fold %d: accuracy %.4f (best epoch %d)", f, report.accuracy, result.best_epoch)

    pooled, curves, ids, probs = pool_outcomes(outcomes, names, cfg.k)
    if pooled.n != len(data):
        raise LeakageError(f"pooled test count {pooled.n} != labeled set size {len(data)}")
    write_eval_bundle(out / "pooled", pooled, curves, ids, probs, cfg.figures, f"{scheme.value}-class pooled")

    best = max(range(len(outcomes)), key=lambda i: (outcomes[i].report.accuracy, -i))
    backend, x_te, fold, stats = backends[best]
    if cfg.timing_repeats > 0:
        t = time_inference(backend, x_te[0], repeats=cfg.timing_repeats)
        reporting.write_json(out / "timing.json", {
            "fold": best, "median_seconds_per_image": t.median, "variance": t.variance,
            "samples": t.samples,
        })
    if cfg.explain.samples > 0:
        layer = cfg.explain.layer or spec.last_conv()
        chosen = list(fold.test)[: cfg.explain.samples]
        samples = [
            CamSample(data.ids[i], x_te[j], images[i], int(labels[i]))
            for j, i in enumerate(chosen)
        ]
        with _stage(best, "scorecam"):
            cam_report(backend, samples, layer, out / "scorecam", cfg.explain.alpha, names)
    return pooled


def evaluate_external(predictions_path, plan: FoldPlan, out_dir, figures: bool = True,
                      scheme=None) -> MetricsReport:
    """Report bundle from an externally produced predictions table; no training."""
    from .model import predictions_backend

    names = list(plan.class_names)
    if scheme is not None:
        expected = LabelScheme.parse(scheme).class_names
        if expected != names:
            raise PipelineError(f"fold plan classes {names} do not match scheme {expected}")
    backend = predictions_backend(predictions_path)
    if backend.num_classes != len(names):
        raise PipelineError(f"predictions have {backend.num_classes} columns, plan has {len(names)} classes")
    out = Path(out_dir)
    labels = np.asarray(plan.labels, dtype=np.int64)
    outcomes = []
    for f, fold in enumerate(plan.folds):
        ids = [plan.ids[i] for i in fold.test]
        probs = backend.predict_proba(ids)
        report, curves = evaluate_predictions(ids, labels[list(fold.test)], probs, names)
        write_eval_bundle(out / f"fold_{f}", report, curves, ids, probs, figures, f"fold {f}")
        outcomes.append(FoldOutcome(report, ids, labels[list(fold.test)], probs))
    pooled, curves, ids, probs = pool_outcomes(outcomes, names, plan.k)
    write_eval_bundle(out / "pooled", pooled, curves, ids, probs, figures, "pooled")
    return pooled
