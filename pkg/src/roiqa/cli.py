"""Single entry point for the pipeline:
synth, masks, label, instruct, split, train, eval, serve, aggregate, export.

Every subcommand prints a machine-readable JSON summary as its final line
and writes outputs atomically. A JSON config file may predefine flags;
explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__

KNOWN_CONFIG_KEYS = {
    "ref_dir", "out_dir", "families", "levels", "seed", "jobs", "manifest",
    "masks_dir", "labels", "out", "per_image", "threshold", "mode",
    "train_fraction", "out_train", "out_test", "model_config", "train_config",
    "ckpt", "report", "tasks", "log", "port", "ui_dir", "data",
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    unknown = set(cfg) - KNOWN_CONFIG_KEYS
    if unknown:
        raise SystemExit(f"error: unknown config keys: {sorted(unknown)}")
    return cfg


def _merge(args: argparse.Namespace, cfg: dict, key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _emit(summary: dict) -> None:
    print(json.dumps(summary))


def _parse_families(text: str):
    from .core import DistortionType

    if text == "all":
        return list(DistortionType)
    out = []
    for name in text.split(","):
        name = name.strip().lower()
        try:
            out.append(DistortionType(name))
        except ValueError:
            raise SystemExit(f"error: unknown distortion family {name!r}")
    return out


def _parse_levels(text: str):
    from .distortions import GRID_LEVELS

    if text == "all":
        return list(range(GRID_LEVELS))
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise SystemExit(f"error: bad level list {text!r}")


def cmd_synth(args) -> int:
    from .distortions import synth_dataset

    cfg = _load_config(args.config)
    ref_dir = _merge(args, cfg, "ref_dir")
    out_dir = _merge(args, cfg, "out_dir")
    if not ref_dir or not out_dir:
        raise SystemExit("error: --ref-dir and --out-dir are required")
    families = _parse_families(_merge(args, cfg, "families", "all"))
    levels = _parse_levels(_merge(args, cfg, "levels", "all"))
    seed = int(_merge(args, cfg, "seed", 0))
    jobs = int(_merge(args, cfg, "jobs", 1))
    manifest = synth_dataset(ref_dir, out_dir, families, levels, seed, jobs=jobs)
    manifest_path = Path(out_dir) / "manifest.jsonl"
    manifest.save_jsonl(manifest_path)
    _emit({
        "command": "synth",
        "images": len(manifest.records),
        "manifest": str(manifest_path),
        "seed": seed,
    })
    return 0


def cmd_masks(args) -> int:
    from .aggregation import save_tasks
    from .core import DatasetManifest
    from .labeling import attach_proposal_masks

    cfg = _load_config(args.config)
    manifest_path = _merge(args, cfg, "manifest")
    masks_dir = _merge(args, cfg, "masks_dir")
    if not manifest_path or not masks_dir:
        raise SystemExit("error: --manifest and --masks-dir are required")
    per_image = int(_merge(args, cfg, "per_image", 3))
    seed = int(_merge(args, cfg, "seed", 0))
    manifest = DatasetManifest.load_jsonl(manifest_path)
    updated, tasks = attach_proposal_masks(manifest, masks_dir, per_image, seed)
    updated.save_jsonl(manifest_path)
    tasks_path = Path(masks_dir) / "tasks.jsonl"
    save_tasks(tasks_path, tasks)
    _emit({
        "command": "masks",
        "rois": sum(len(r.roi_ids) for r in updated.records),
        "tasks": str(tasks_path),
        "manifest": str(manifest_path),
    })
    return 0


def cmd_label(args) -> int:
    from .core import DatasetManifest, save_label_records
    from .labeling import label_manifest

    cfg = _load_config(args.config)
    manifest_path = _merge(args, cfg, "manifest")
    masks_dir = _merge(args, cfg, "masks_dir")
    out = _merge(args, cfg, "out")
    if not manifest_path or not masks_dir or not out:
        raise SystemExit("error: --manifest, --masks-dir and --out are required")
    threshold = float(_merge(args, cfg, "threshold", 0.92))
    jobs = int(_merge(args, cfg, "jobs", 1))
    manifest = DatasetManifest.load_jsonl(manifest_path)
    records, skipped = label_manifest(manifest, masks_dir, threshold, jobs=jobs)
    save_label_records(out, records)
    _emit({"command": "label", "labels": len(records), "skipped": skipped, "out": str(out)})
    return 0


def cmd_instruct(args) -> int:
    from .core import load_label_records, write_jsonl
    from .instructions import generate_instructions

    cfg = _load_config(args.config)
    labels = _merge(args, cfg, "labels")
    out = _merge(args, cfg, "out")
    if not labels or not out:
        raise SystemExit("error: --labels and --out are required")
    mode = _merge(args, cfg, "mode", "fixed")
    seed = int(_merge(args, cfg, "seed", 0))
    records = load_label_records(labels)
    instructions = generate_instructions(records, mode=mode, seed=seed)
    write_jsonl(out, (i.to_json_dict() for i in instructions))
    _emit({"command": "instruct", "instructions": len(instructions), "out": str(out)})
    return 0


def cmd_split(args) -> int:
    from .core import DatasetManifest, split_dataset

    cfg = _load_config(args.config)
    manifest_path = _merge(args, cfg, "manifest")
    out_train = _merge(args, cfg, "out_train")
    out_test = _merge(args, cfg, "out_test")
    if not manifest_path or not out_train or not out_test:
        raise SystemExit("error: --manifest, --out-train and --out-test are required")
    fraction = float(_merge(args, cfg, "train_fraction", 0.8))
    seed = int(_merge(args, cfg, "seed", 0))
    manifest = DatasetManifest.load_jsonl(manifest_path)
    train_m, test_m = split_dataset(manifest, fraction, seed)
    train_m.save_jsonl(out_train)
    test_m.save_jsonl(out_test)
    _emit({
        "command": "split",
        "train_images": len(train_m.image_ids()),
        "test_images": len(test_m.image_ids()),
        "out_train": str(out_train),
        "out_test": str(out_test),
    })
    return 0


def cmd_train(args) -> int:
    from .core import DatasetManifest, load_label_records
    from .model import ModelConfig, RoiQualityModel
    from .report import plot_loss_curve
    from .training import TrainConfig, load_samples, train

    cfg = _load_config(args.config)
    manifest_path = _merge(args, cfg, "manifest")
    labels_path = _merge(args, cfg, "labels")
    masks_dir = _merge(args, cfg, "masks_dir")
    out = _merge(args, cfg, "out")
    if not all((manifest_path, labels_path, masks_dir, out)):
        raise SystemExit("error: --manifest, --labels, --masks-dir and --out are required")
    model_cfg = ModelConfig.from_json_dict(json.loads(Path(mc).read_text())) \
        if (mc := _merge(args, cfg, "model_config")) else ModelConfig()
    train_cfg = TrainConfig.from_json_dict(json.loads(Path(tc).read_text())) \
        if (tc := _merge(args, cfg, "train_config")) else TrainConfig()
    manifest = DatasetManifest.load_jsonl(manifest_path)
    labels = load_label_records(labels_path)
    samples = load_samples(manifest, labels, masks_dir)
    if not samples:
        raise SystemExit("error: no training samples found")
    model = RoiQualityModel(model_cfg)
    losses = train(model, samples, train_cfg, log_every=max(1, train_cfg.epochs // 10))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.ckpt"
    model.save(ckpt)
    with open(out_dir / "losses.json", "w", encoding="utf-8") as f:
        json.dump(losses, f)
        f.write("\n")
    plot_loss_curve(losses, out_dir / "loss_curve.png")
    _emit({
        "command": "train",
        "samples": len(samples),
        "epochs": train_cfg.epochs,
        "final_loss": losses[-1],
        "checkpoint": str(ckpt),
    })
    return 0


def cmd_eval(args) -> int:
    from .core import DatasetManifest, load_label_records
    from .model import RoiQualityModel
    from .report import render_eval_outputs
    from .training import evaluate, load_samples, predict_sample

    cfg = _load_config(args.config)
    ckpt = _merge(args, cfg, "ckpt")
    manifest_path = _merge(args, cfg, "manifest")
    labels_path = _merge(args, cfg, "labels")
    masks_dir = _merge(args, cfg, "masks_dir")
    report_path = _merge(args, cfg, "report")
    if not all((ckpt, manifest_path, labels_path, masks_dir, report_path)):
        raise SystemExit(
            "error: --ckpt, --manifest, --labels, --masks-dir and --report are required"
        )
    model = RoiQualityModel.load(ckpt)
    manifest = DatasetManifest.load_jsonl(manifest_path)
    labels = load_label_records(labels_path)
    samples = load_samples(manifest, labels, masks_dir)
    if not samples:
        raise SystemExit("error: no evaluation samples found")
    report = evaluate(model, samples)
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = report_path.with_name(report_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(report.to_json_dict(), f, indent=2)
        f.write("\n")
    import os

    os.replace(tmp, report_path)
    preds = [predict_sample(model, s) for s in samples]
    render_eval_outputs(
        report,
        report_path.parent,
        pred_quality=[p["quality"] for p in preds],
        gt_quality=[s.quality_score for s in samples],
        pred_importance=[p["importance"] for p in preds],
        gt_importance=[s.importance_score for s in samples],
    )
    _emit({
        "command": "eval",
        "samples": len(samples),
        "quality_srocc": report.quality_srocc,
        "importance_srocc": report.importance_srocc,
        "report": str(report_path),
    })
    return 0


def cmd_serve(args) -> int:
    from .aggregation import AnnotationStore, load_tasks
    from .service import serve

    cfg = _load_config(args.config)
    tasks_path = _merge(args, cfg, "tasks")
    log_path = _merge(args, cfg, "log")
    if not tasks_path or not log_path:
        raise SystemExit("error: --tasks and --log are required")
    port = int(_merge(args, cfg, "port", 8000))
    ui_dir = _merge(args, cfg, "ui_dir")
    store = AnnotationStore(load_tasks(tasks_path), log_path)
    serve(store, port, ui_dir=ui_dir)
    return 0


def cmd_aggregate(args) -> int:
    from .aggregation import AnnotationStore, RoiTask, aggregate_roi, load_tasks
    from .core import write_jsonl

    cfg = _load_config(args.config)
    tasks_path = _merge(args, cfg, "tasks")
    log_path = _merge(args, cfg, "log")
    out = _merge(args, cfg, "out")
    if not tasks_path or not log_path or not out:
        raise SystemExit("error: --tasks, --log and --out are required")
    store = AnnotationStore(load_tasks(tasks_path), log_path)
    aggregates = []
    for roi_id in sorted(store.tasks):
        ratings = store.ratings_for(roi_id)
        if ratings:
            aggregates.append(store.aggregate(roi_id).to_json_dict())
    write_jsonl(out, aggregates)
    _emit({"command": "aggregate", "rois": len(aggregates), "out": str(out)})
    return 0


def cmd_export(args) -> int:
    from .aggregation import AnnotationStore, load_tasks
    from .core import save_label_records

    cfg = _load_config(args.config)
    tasks_path = _merge(args, cfg, "tasks")
    log_path = _merge(args, cfg, "log")
    out = _merge(args, cfg, "out")
    if not tasks_path or not log_path or not out:
        raise SystemExit("error: --tasks, --log and --out are required")
    store = AnnotationStore(load_tasks(tasks_path), log_path)
    records = store.export_labels()
    save_label_records(out, records)
    _emit({"command": "export", "labels": len(records), "out": str(out)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roiqa", description=__doc__)
    p.add_argument("--version", action="version", version=f"roiqa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its keys")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=None)

    sp = sub.add_parser("synth", help="synthesize distorted images + manifest")
    common(sp)
    sp.add_argument("--ref-dir", dest="ref_dir")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--families", default=None, help="comma list or 'all'")
    sp.add_argument("--levels", default=None, help="comma list or 'all'")
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("masks", help="propose + persist ROI masks, fill manifest roi_ids")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--masks-dir", dest="masks_dir")
    sp.add_argument("--per-image", dest="per_image", type=int, default=None)
    sp.set_defaults(fn=cmd_masks)

    sp = sub.add_parser("label", help="oracle-label every ROI in a manifest")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--masks-dir", dest="masks_dir")
    sp.add_argument("--out")
    sp.add_argument("--threshold", type=float, default=None)
    sp.set_defaults(fn=cmd_label)

    sp = sub.add_parser("instruct", help="generate instruction-response pairs")
    common(sp)
    sp.add_argument("--labels")
    sp.add_argument("--out")
    sp.add_argument("--mode", choices=("random", "fixed"), default=None)
    sp.set_defaults(fn=cmd_instruct)

    sp = sub.add_parser("split", help="80/20-style split by image_id")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    sp.add_argument("--out-train", dest="out_train")
    sp.add_argument("--out-test", dest="out_test")
    sp.set_defaults(fn=cmd_split)

    sp = sub.add_parser("train", help="train the ROI quality model")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--labels")
    sp.add_argument("--masks-dir", dest="masks_dir")
    sp.add_argument("--out")
    sp.add_argument("--model-config", dest="model_config")
    sp.add_argument("--train-config", dest="train_config")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint; write report + figures")
    common(sp)
    sp.add_argument("--ckpt")
    sp.add_argument("--manifest")
    sp.add_argument("--labels")
    sp.add_argument("--masks-dir", dest="masks_dir")
    sp.add_argument("--report")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("serve", help="run the annotation HTTP service")
    common(sp)
    sp.add_argument("--tasks")
    sp.add_argument("--log")
    sp.add_argument("--port", type=int, default=None)
    sp.add_argument("--ui-dir", dest="ui_dir")
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("aggregate", help="aggregate the rating log per ROI")
    common(sp)
    sp.add_argument("--tasks")
    sp.add_argument("--log")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_aggregate)

    sp = sub.add_parser("export", help="export finalized labels as RoiLabelRecords")
    common(sp)
    sp.add_argument("--tasks")
    sp.add_argument("--log")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_export)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except Exception as e:  # surface module errors as clean diagnostics
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
