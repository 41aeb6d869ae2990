"""``ecgtrace`` command line.

Exit codes: 0 success, 1 internal error, 2 user/input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import PipelineError

log = logging.getLogger("ecgtrace")


def cmd_ingest(args) -> int:
    from .dataset import ingest

    manifest = ingest(args.root)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(manifest.to_json())
    print(json.dumps(manifest.counts))
    return 0


def cmd_split(args) -> int:
    from .dataset import Manifest, counts, map_labels, split_kfold
    from .reporting import write_rows_csv

    manifest = Manifest.from_json(Path(args.manifest).read_text())
    data = map_labels(manifest, args.scheme or "three")
    plan = split_kfold(data, args.folds or 5, args.val_frac, args.seed or 0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan.to_json())
    write_rows_csv(out.with_suffix(".counts.csv"), counts(plan, data))
    return 0


def _load_run_config(args):
    from .config import RunConfig

    cfg = RunConfig.load(args.config)
    d = cfg.to_dict()
    if args.seed is not None:
        d["seeds"] = {"split": args.seed, "augment": args.seed, "train": args.seed}
    if args.scheme:
        d["scheme"] = args.scheme
    if args.folds:
        d["k"] = args.folds
    if args.image_size:
        d["image_size"] = args.image_size
    if args.out:
        d["out_dir"] = args.out
    return RunConfig.from_dict(d)


def cmd_run(args) -> int:
    from .pipeline import run_experiment
    from .reporting import summary_text

    cfg = _load_run_config(args)
    pooled = run_experiment(cfg)
    print(summary_text(pooled, f"{cfg.scheme}-class, {cfg.k}-fold pooled"), end="")
    print(f"report bundle: {cfg.out_dir}")
    return 0


def cmd_eval_external(args) -> int:
    from .dataset import FoldPlan
    from .pipeline import evaluate_external
    from .reporting import summary_text

    plan = FoldPlan.from_json(Path(args.plan).read_text())
    pooled = evaluate_external(args.predictions, plan, args.out, figures=not args.no_figures,
                               scheme=args.scheme)
    print(summary_text(pooled, "pooled"), end="")
    return 0


def _cam_inputs(args, extra):
    from .dataset import Manifest, map_labels
    from .imgproc import load_image, preprocess, zscore
    from .scorecam import CamSample

    size, channels = extra["image_size"], extra["channels"]
    stats = extra.get("zscore_stats")
    stats = None if stats is None else tuple(np.asarray(s) for s in stats)
    entries = []
    if args.manifest:
        manifest = Manifest.from_json(Path(args.manifest).read_text())
        data = map_labels(manifest, args.scheme or _scheme_for(extra["class_names"]))
        wanted = set(args.ids) if args.ids else None
        for sid, path, y in zip(data.ids, data.paths, data.labels):
            if wanted is None or sid in wanted:
                entries.append((sid, Path(manifest.root) / path, int(y)))
        if args.limit:
            entries = entries[: args.limit]
    for p in args.images or []:
        entries.append((Path(p).as_posix(), Path(p), None))
    if not entries:
        raise PipelineError("no samples given (use image paths or --manifest)")
    samples = []
    for sid, path, y in entries:
        base = preprocess(load_image(path), size, channels)
        samples.append(CamSample(sid, zscore(base, stats), base, y))
    return samples


def _scheme_for(class_names):
    return {2: "two", 3: "three", 5: "five"}[len(class_names)]


def cmd_scorecam(args) -> int:
    from .model import CNNBackend, load_checkpoint
    from .scorecam import cam_report

    spec, params, extra = load_checkpoint(args.checkpoint)
    backend = CNNBackend(spec, params)
    samples = _cam_inputs(args, extra)
    layer = args.layer or spec.last_conv()
    files = cam_report(backend, samples, layer, args.out, args.alpha, extra.get("class_names"),
                       target_class=args.target_class)
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_preview(args) -> int:
    from .imgproc import gamma_correct, load_image, save_image

    img = load_image(args.image)
    corrected = gamma_correct(img)
    out = Path(args.out)
    ext = ".pgm" if args.pgm and img.channels == 1 else ".png"
    save_image(img, out / f"original{ext}")
    save_image(corrected, out / f"gamma{ext}")
    if not args.no_figures:
        from .plotting import plot_preview

        plot_preview(img, corrected, out / "preview.png")
    print(f"wrote preview to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecgtrace", description="ECG trace image classification pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a corpus directory into a manifest")
    p.add_argument("root")
    p.add_argument("--out", default="manifest.json")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="stratified k-fold plan from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheme", choices=["two", "three", "five"])
    p.add_argument("--folds", type=int)
    p.add_argument("--val-frac", type=float, default=0.10)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="fold_plan.json")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("run", help="full cross-validated experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--scheme", choices=["two", "three", "five"])
    p.add_argument("--folds", type=int)
    p.add_argument("--image-size", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval-external", help="report bundle from an external predictions CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--plan", required=True, help="fold plan JSON (from split or run)")
    p.add_argument("--scheme", choices=["two", "three", "five"])
    p.add_argument("--out", default="external_report")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval_external)

    p = sub.add_parser("scorecam", help="Score-CAM heatmaps from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--scheme", choices=["two", "three", "five"])
    p.add_argument("--ids", nargs="*")
    p.add_argument("--limit", type=int)
    p.add_argument("--layer")
    p.add_argument("--target-class", type=int)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", default="scorecam")
    p.set_defaults(func=cmd_scorecam)

    p = sub.add_parser("preview", help="write original and gamma-corrected versions of an image")
    p.add_argument("image")
    p.add_argument("--out", default="preview")
    p.add_argument("--pgm", action="store_true", help="write PGM instead of PNG for gray images")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PipelineError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
