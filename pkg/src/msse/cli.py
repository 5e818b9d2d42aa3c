"""Command-line entry points: ``msse <command> --config run.json``.

Artifacts live in ``data.workdir``::

    dedup   -> manifest.jsonl, rejections.csv
    split   -> manifest.jsonl (splits assigned, augmented train records planned)
    train   -> model.ckpt, train_log.csv
    eval    -> eval.json, roc.csv, pr.csv
    report  -> report.txt
    gradcam -> gradcam.ppm, gradcam.csv

Relative paths in the config resolve against the config file's directory.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .backbone import MiniDenseNet, MiniDenseNetConfig
from .data.augment import AugmentSpec
from .data.image import ImageFormatError, load_ppm, save_ppm, to_tensor
from .data.manifest import Manifest, Record, dedup_records, plan_records
from .data.phash import phash64
from .explain import grad_cam, render_heatmap_overlay
from .head import GapFcHead, MsseHead, MsseHeadConfig
from .metrics import ConfusionMatrix, EvalReport, class_metrics, cohen_kappa, evaluate, format_table
from .model import Classifier
from .tensor import ShapeError
from .trainer import SampleSet, TrainConfig, fit, load_checkpoint, save_checkpoint, stratified_split
from .trainer.checkpoint import CheckpointError

IMAGE_SUFFIXES = (".ppm",)


class CliError(Exception):
    """Reported as ``error: <message>`` with a nonzero exit."""


def _dc_defaults(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = copy.deepcopy(f.default)
        else:
            out[f.name] = f.default_factory()
    return out


def default_config() -> dict:
    head = _dc_defaults(MsseHeadConfig)
    head["branch_kernels"] = list(head["branch_kernels"])
    head["in_channels"] = None  # None: take the backbone's output width
    head["kind"] = "msse"
    backbone = _dc_defaults(MiniDenseNetConfig)
    backbone["blocks"] = [list(b) for b in backbone["blocks"]]
    backbone["seed"] = 0
    augment = _dc_defaults(AugmentSpec)
    augment["crop_range"] = list(augment["crop_range"])
    augment["brightness_range"] = list(augment["brightness_range"])
    augment["contrast_range"] = list(augment["contrast_range"])
    return {
        "backbone": backbone,
        "head": head,
        "train": _dc_defaults(TrainConfig),
        "data": {"root": "images", "workdir": "run", "tau": 0.30, "target_per_class": 5000,
                 "split_ratios": [0.8, 0.1, 0.1], "augment": augment},
        "eval": {"averaging": "micro", "split": "test"},
        "explain": {"alpha": 0.4, "output_size": None},
    }


def _merge(base: dict, override: dict, where: str) -> dict:
    for key, value in override.items():
        if key not in base:
            raise CliError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise CliError(f"config key {where}{key!r} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value
    return base


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file {path} not found; pass --config <run.json>")
    try:
        user = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise CliError("config must be a JSON object")
    cfg = _merge(default_config(), user, "")
    return cfg, path.parent


class Run:
    """Resolved configuration plus artifact paths."""

    def __init__(self, cfg: dict, base: Path):
        self.cfg = cfg
        data = cfg["data"]
        self.root = (base / data["root"]).resolve()
        self.workdir = (base / data["workdir"]).resolve()
        try:
            self.train_cfg = TrainConfig(**cfg["train"])
            self.augment = AugmentSpec(**{k: tuple(v) if isinstance(v, list) else v
                                          for k, v in data["augment"].items()})
            bb = dict(cfg["backbone"])
            self.backbone_seed = bb.pop("seed")
            self.backbone_cfg = MiniDenseNetConfig(**bb)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid config: {exc}") from None

    def path(self, name: str) -> Path:
        return self.workdir / name

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise CliError(f"{p} not found; run `msse {producer} --config ...` first")
        return p

    def build_model(self, num_classes: int) -> Classifier:
        bb = MiniDenseNet(self.backbone_cfg, seed=self.backbone_seed,
                          trainable=not self.train_cfg.freeze_backbone)
        h = dict(self.cfg["head"])
        kind = h.pop("kind")
        if h["in_channels"] is None:
            h["in_channels"] = bb.output_channels
        elif h["in_channels"] != bb.output_channels:
            raise CliError(f"head.in_channels={h['in_channels']} but the backbone emits "
                           f"{bb.output_channels} channels")
        if h["num_classes"] != num_classes:
            raise CliError(f"head.num_classes={h['num_classes']} but the manifest has "
                           f"{num_classes} classes")
        seed = self.train_cfg.seed
        if kind == "msse":
            try:
                head = MsseHead(MsseHeadConfig(**h), seed=seed)
            except (TypeError, ValueError) as exc:
                raise CliError(f"invalid head config: {exc}") from None
        elif kind == "gapfc":
            head = GapFcHead(h["in_channels"], num_classes, seed=seed)
        else:
            raise CliError(f"head.kind must be 'msse' or 'gapfc', got {kind!r}")
        return Classifier(bb, head, self.train_cfg.freeze_backbone)

    def load_manifest(self) -> Manifest:
        return Manifest.load(self.require("manifest.jsonl", "dedup"))

    def load_images(self, records) -> np.ndarray:
        size = self.backbone_cfg.input_size
        out = np.empty((len(records), size, size, 3), dtype=np.uint8)
        for i, r in enumerate(records):
            img = load_ppm(self.root / r.path)
            if img.shape != (size, size, 3):
                raise CliError(f"{r.path}: image is {img.shape[1]}x{img.shape[0]}, "
                               f"backbone.input_size is {size}")
            out[i] = img
        return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_dedup(run: Run, out=None) -> int:
    if not run.root.is_dir():
        raise CliError(f"image root {run.root} is not a directory")
    files = sorted(p for p in run.root.rglob("*")
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
                   and p.parent != run.root)
    if not files:
        raise CliError(f"no images found under {run.root} (expected <class>/<name>.ppm)")
    records, failed = [], 0
    for p in files:
        try:
            h = phash64(load_ppm(p))
        except (OSError, ImageFormatError) as exc:
            print(f"warning: skipping {p}: {exc}", file=sys.stderr)
            failed += 1
            continue
        rel = p.relative_to(run.root).as_posix()
        records.append(Record(rel, rel.split("/")[0], phash=h))
    if not records:
        raise CliError(f"all {failed} images under {run.root} failed to load")
    kept, log = dedup_records(records, run.cfg["data"]["tau"])
    run.workdir.mkdir(parents=True, exist_ok=True)
    target = Path(out) if out else run.path("manifest.jsonl")
    Manifest(kept).save(target)
    with open(run.path("rejections.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rejected", "nearest", "similarity"])
        for row in log:
            w.writerow([row[0], row[1], repr(row[2])])
    total = Counter(r.label for r in records)
    retained = Counter(r.label for r in kept)
    for label in sorted(total):
        print(f"{label}: retained {retained[label]}, rejected {total[label] - retained[label]}")
    return 0


def cmd_split(run: Run, out=None) -> int:
    m = run.load_manifest()
    originals = Manifest(m.select(origin="original"))
    try:
        split = stratified_split(originals, tuple(run.cfg["data"]["split_ratios"]),
                                 run.train_cfg.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    planned = plan_records(split, run.cfg["data"]["target_per_class"], split="train")
    result = Manifest(split.records + planned)
    result.save(Path(out) if out else run.path("manifest.jsonl"))
    for s in ("train", "val", "test"):
        print(f"{s}: {len(result.select(split=s, origin='original'))} originals")
    print(f"planned augmented train samples: {len(planned)}")
    return 0


def _sample_set(run: Run, m: Manifest, split: str, class_index: dict) -> SampleSet:
    orig = m.select(split=split, origin="original")
    pos = {r.path: i for i, r in enumerate(orig)}
    virtual = [(pos[r.source_id], r.path) for r in m.select(split=split, origin="augmented")]
    labels = [class_index[r.label] for r in orig]
    return SampleSet(run.load_images(orig), np.array(labels, dtype=np.int64), virtual)


def _require_split(m: Manifest, split: str) -> None:
    if not m.select(split=split):
        raise CliError(f"manifest has no {split!r} records; run `msse split --config ...` first")


def cmd_train(run: Run, out=None) -> int:
    m = run.load_manifest()
    _require_split(m, "train")
    classes = m.classes()
    index = {c: i for i, c in enumerate(classes)}
    model = run.build_model(len(classes))
    train = _sample_set(run, m, "train", index)
    val = _sample_set(run, m, "val", index)
    opt = run.train_cfg.make_optimizer()
    log = fit(model, train, val, run.train_cfg, opt, run.augment)
    run.workdir.mkdir(parents=True, exist_ok=True)
    echo = dict(run.cfg, classes=classes)
    save_checkpoint(Path(out) if out else run.path("model.ckpt"), model, opt, echo)
    log.save_csv(run.path("train_log.csv"))
    last = log.rows[-1] if log.rows else None
    if last:
        print(f"epoch {last['epoch']}: train_loss {last['train_loss']:.4f} "
              f"val_accuracy {last['val_accuracy']:.4f}")
    return 0


def _load_trained(run: Run):
    ckpt_path = run.require("model.ckpt", "train")
    m = run.load_manifest()
    classes = m.classes()
    model = run.build_model(len(classes))
    try:
        ckpt = load_checkpoint(ckpt_path, model)
    except (ShapeError, CheckpointError) as exc:
        raise CliError(f"{ckpt_path} does not match the current config ({exc}); "
                       "retrain with `msse train`") from None
    return model, m, (ckpt.config or {}).get("classes", classes)


def cmd_eval(run: Run, out=None) -> int:
    model, m, classes = _load_trained(run)
    split = run.cfg["eval"]["split"]
    recs = m.select(split=split, origin="original")
    if not recs:
        raise CliError(f"manifest has no {split!r} records; run `msse split --config ...` first")
    index = {c: i for i, c in enumerate(classes)}
    labels = np.array([index[r.label] for r in recs])
    scores = model.predict_proba(to_tensor(run.load_images(recs)))
    report = evaluate(labels, scores, classes, run.cfg["eval"]["averaging"])
    report.save_json(Path(out) if out else run.path("eval.json"))
    report.save_curves(run.path("roc.csv"), run.path("pr.csv"))
    print(f"accuracy {report.metrics.accuracy:.4f}  kappa {report.kappa:.4f}")
    return 0


def report_from_json(path) -> EvalReport:
    d = json.loads(Path(path).read_text())
    cm = ConfusionMatrix(np.array(d["confusion"]), d["class_names"])
    try:
        kappa, p_o, p_e = cohen_kappa(cm)
    except ValueError:
        kappa, p_o, p_e = float("nan"), d["accuracy"], 1.0
    return EvalReport(cm, class_metrics(cm), kappa, p_o, p_e, averaging=d["averaging"])


def cmd_report(run: Run, out=None) -> int:
    report = report_from_json(run.require("eval.json", "eval"))
    text = format_table(report)
    (Path(out) if out else run.path("report.txt")).write_text(text)
    print(text, end="")
    return 0


def cmd_gradcam(run: Run, image, target=None, out=None) -> int:
    if image is None:
        raise CliError("gradcam needs --image <file.ppm>")
    img_path = Path(image)
    if not img_path.is_file():
        raise CliError(f"image {img_path} not found")
    model, _, classes = _load_trained(run)
    try:
        img = load_ppm(img_path)
    except ImageFormatError as exc:
        raise CliError(f"{img_path}: {exc}") from None
    size = run.backbone_cfg.input_size
    if img.shape[:2] != (size, size):
        raise CliError(f"{img_path} is {img.shape[1]}x{img.shape[0]}; expected {size}x{size}")
    if target is None:
        c = int(model.predict_proba(to_tensor(img[None])).argmax())
    elif target in classes:
        c = classes.index(target)
    else:
        try:
            c = int(target)
        except ValueError:
            raise CliError(f"unknown class {target!r}; choose from {classes}") from None
        if not 0 <= c < len(classes):
            raise CliError(f"class index {c} outside [0, {len(classes)})")
    ex = run.cfg["explain"]
    heat = grad_cam(model, img, c, tuple(ex["output_size"]) if ex["output_size"] else None)
    if heat.values.shape != img.shape[:2]:
        raise CliError("explain.output_size must match the image size for an overlay")
    target_path = Path(out) if out else run.path("gradcam.ppm")
    target_path.parent.mkdir(parents=True, exist_ok=True)
    save_ppm(render_heatmap_overlay(img, heat, ex["alpha"]), target_path)
    heat.save_csv(target_path.with_suffix(".csv"))
    flag = " (all-zero map)" if heat.all_zero else ""
    print(f"class {classes[c]}: overlay written to {target_path}{flag}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msse", description="MS-SSE damage classifier pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("dedup", "split", "train", "eval", "gradcam", "report"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="run config JSON")
        sp.add_argument("--out", help="override the command's main artifact path")
        if name == "gradcam":
            sp.add_argument("--image", required=True, help="PPM image to explain")
            sp.add_argument("--class", dest="target", help="class name or index (default: predicted)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = Run(*load_config(args.config))
        if args.command == "gradcam":
            return cmd_gradcam(run, args.image, args.target, args.out)
        handler = {"dedup": cmd_dedup, "split": cmd_split, "train": cmd_train,
                   "eval": cmd_eval, "report": cmd_report}[args.command]
        return handler(run, args.out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
