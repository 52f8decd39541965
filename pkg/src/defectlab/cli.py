"""Command-line entry point wiring the library into reproducible pipelines.

Subcommands: synth, aggregate, consistency, train, predict, eval,
baseline, localize, serve, report. Every artifact embeds the producing
command line and seed. Exit codes: 0 success, 2 usage error, 3 data
error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Optional

import numpy as np

from .core import DefectKind, SeededRng
from .metrics import CrossClassConfig, MetricUndefinedError, cross_class_rho

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

DEFAULT_SEED = 20260810

_DEFECT_COLUMNS = {
    "bad_exposure": DefectKind.BAD_EXPOSURE,
    "bad_white_balance": DefectKind.BAD_WHITE_BALANCE,
    "saturation": DefectKind.OVER_UNDER_SATURATION,
    "noise": DefectKind.NOISE,
    "haze": DefectKind.HAZE,
    "blur": DefectKind.UNDESIRED_BLUR,
    "composition": DefectKind.BAD_COMPOSITION,
}


class DataError(Exception):
    """User-supplied data is malformed or inconsistent."""


def _provenance(args: argparse.Namespace, seed: int) -> dict:
    return {"command": " ".join(sys.argv), "seed": seed}


def _load_config_overrides(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    """Apply config-file values for flags still at their defaults.

    Precedence: CLI > config file > defaults.
    """
    config_path = getattr(args, "config", None)
    if not config_path:
        return
    with open(config_path, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    active = sub_action.choices[args.command]
    defaults = {a.dest: a.default for a in active._actions}
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in defaults:
            raise DataError(f"config file sets unknown option {key!r}")
        if getattr(args, dest) == defaults[dest]:
            setattr(args, dest, value)


def _seed_of(args: argparse.Namespace) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = DEFAULT_SEED
        print(f"[defectlab] no --seed given; using fixed default {seed}", file=sys.stderr)
    return int(seed)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_synth(args) -> int:
    from .raster import load
    from .core import ImageRef
    from .synth import SEQUENCE_KINDS, build_synth_dataset, generate_base_corpus

    seed = _seed_of(args)
    if args.levels != "auto":
        raise DataError(
            "only --levels auto is supported (11 levels, 21 for saturation)"
        )
    rng = SeededRng(seed)
    os.makedirs(args.base_dir, exist_ok=True)
    existing = sorted(
        f for f in os.listdir(args.base_dir) if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if existing:
        refs = []
        for name in existing:
            path = os.path.join(args.base_dir, name)
            img = load(path)
            refs.append(
                ImageRef(
                    image_id=name.rsplit(".", 1)[0],
                    path=path,
                    width=img.width,
                    height=img.height,
                )
            )
    else:
        refs = generate_base_corpus(args.base_dir, args.count, size=args.size, rng=rng)

    kinds = SEQUENCE_KINDS if args.defects == "all" else tuple(args.defects.split(","))
    manifest = build_synth_dataset(
        refs, kinds, rng.derive("synth"), args.out_dir, provenance=_provenance(args, seed)
    )
    print(f"wrote {len(manifest.rows)} rows to {args.out_dir}/manifest.json")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    from .annotations import (
        aggregate_labels,
        compute_worker_accuracy,
        labels_to_csv,
        parse_annotation_jsonl,
    )

    with open(args.annotations, "r", encoding="utf-8") as fh:
        records = parse_annotation_jsonl(fh)
    accuracies = compute_worker_accuracy(records)
    labels, rejects = aggregate_labels(records, accuracies, min_annotators=args.min_annotators)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(labels_to_csv(labels))
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as fh:
            json.dump(
                [
                    {"image_id": i, "defect": d.value, "annotators": n}
                    for i, d, n in rejects
                ],
                fh,
                indent=1,
            )
    print(f"aggregated {len(labels)} labels ({len(rejects)} rejected) -> {args.out}")
    return EXIT_OK


def _cmd_consistency(args) -> int:
    from .annotations import consistency_analysis, parse_annotation_jsonl

    with open(args.annotations, "r", encoding="utf-8") as fh:
        records = parse_annotation_jsonl(fh)
    batches: dict[str, list] = {}
    if args.batches:
        with open(args.batches, "r", encoding="utf-8") as fh:
            batch_of_worker = json.load(fh)
        for rec in records:
            batch = batch_of_worker.get(rec.worker_id)
            if batch is None:
                raise DataError(f"worker {rec.worker_id!r} missing from batch map")
            batches.setdefault(str(batch), []).append(rec)
    else:
        batches["all"] = list(records)
    seed = _seed_of(args)
    report = consistency_analysis(
        batches, CrossClassConfig(repetitions=args.reps, seed=seed), fdr_q=args.fdr
    )
    payload = json.loads(report.to_json())
    payload["provenance"] = _provenance(args, seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    print(f"consistency report -> {args.out}")
    return EXIT_OK


def _labeled_from_args(manifest_path: str):
    from .synth import SynthManifest
    from .model import labeled_images_from_synth

    manifest = SynthManifest.load(manifest_path)
    return labeled_images_from_synth(manifest)


def _cmd_train(args) -> int:
    from .core import DefectKind
    from .model import TrainConfig, derive_infogain_matrix, save_model, train

    seed = _seed_of(args)
    labeled = _labeled_from_args(args.manifest)
    config = TrainConfig(
        epochs=args.epochs, seed=seed, loss=args.loss, augment=not args.no_augment
    )
    rng = SeededRng(seed)
    infogain = {d: derive_infogain_matrix(d, rng=rng.derive("infogain")) for d in DefectKind}
    holistic, patch, log = train(labeled, config, infogain, rng.derive("train"))
    os.makedirs(args.out_dir, exist_ok=True)
    save_model(holistic, os.path.join(args.out_dir, "holistic.dfl"))
    save_model(patch, os.path.join(args.out_dir, "patch.dfl"))
    with open(os.path.join(args.out_dir, "training_log.json"), "w", encoding="utf-8") as fh:
        json.dump({"provenance": _provenance(args, seed), "log": log}, fh, indent=1)
    print(f"models -> {args.out_dir}/holistic.dfl, {args.out_dir}/patch.dfl")
    return EXIT_OK


def _cmd_predict(args) -> int:
    from .model import load_model, predict
    from .raster import load

    seed = _seed_of(args)
    holistic = load_model(args.holistic)
    patch = load_model(args.patch)
    raster = load(args.image)
    result = predict(holistic, patch, raster, k_patches=args.k, rng=SeededRng(seed))
    payload = {
        "image": args.image,
        "scores": {d.value: s.value for d, s in result.scores.items()},
        "holistic": {d.value: v for d, v in result.holistic.items()},
        "patch": None
        if result.patch is None
        else {d.value: v for d, v in result.patch.items()},
        "warnings": result.warnings,
        "provenance": _provenance(args, seed),
    }
    text = json.dumps(payload, indent=1)
    if args.json:
        print(text)
    else:
        for defect, score in payload["scores"].items():
            print(f"{defect:20s} {score:+.4f}")
    return EXIT_OK


def _read_score_csv(path: str) -> dict[str, dict[DefectKind, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "image_id":
            raise DataError(f"{path}: expected header starting with image_id")
        defects = []
        for col in header[1:]:
            if col not in _DEFECT_COLUMNS:
                raise DataError(f"{path}: unknown defect column {col!r}")
            defects.append(_DEFECT_COLUMNS[col])
        out: dict[str, dict[DefectKind, float]] = {}
        for row in reader:
            if not row:
                continue
            out[row[0]] = {
                d: float(cell) for d, cell in zip(defects, row[1:]) if cell != ""
            }
    return out


def _cmd_eval(args) -> int:
    if args.metric != "cross-class-rho":
        raise DataError(f"unsupported metric {args.metric!r}")
    seed = _seed_of(args)
    gt = _read_score_csv(args.gt)
    pred = _read_score_csv(args.pred)
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise DataError(f"predictions missing for {len(missing)} images, e.g. {missing[0]}")

    per_defect = {}
    values = []
    for defect in DefectKind:
        labels = [(i, scores[defect]) for i, scores in gt.items() if defect in scores]
        if not labels:
            continue
        preds = [(i, pred[i].get(defect, 0.0)) for i, _ in labels]
        cfg = CrossClassConfig(repetitions=args.reps, seed=seed)
        try:
            result = cross_class_rho(labels, preds, defect, cfg)
        except MetricUndefinedError as exc:
            per_defect[defect.value] = {"error": str(exc)}
            continue
        per_defect[defect.value] = {
            "value": result.value,
            "repetitions": result.repetitions_used,
            "degenerate": result.degenerate_count,
            "mc_stderr": result.mc_stderr,
        }
        values.append(result.value)
    report = {
        "metric": "cross-class-rho",
        "per_defect": per_defect,
        "mean": float(np.mean(values)) if values else None,
        "provenance": _provenance(args, seed),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    print(f"eval report -> {args.out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    from .baselines import BaselineKind, run_baseline
    from .raster import load

    kind = BaselineKind(args.method)
    rows = []
    for name in sorted(os.listdir(args.images)):
        if not name.lower().endswith((".png", ".jpg", ".jpeg")):
            continue
        raster = load(os.path.join(args.images, name))
        rows.append((name.rsplit(".", 1)[0], run_baseline(kind, raster)))
    if not rows:
        raise DataError(f"no images found in {args.images}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "score"])
    for image_id, score in rows:
        writer.writerow([image_id, f"{score:.6f}"])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    print(f"{len(rows)} scores -> {args.out}")
    return EXIT_OK


def _cmd_localize(args) -> int:
    from .model import load_model, localize
    from .raster import GrayRaster, Raster, load, save

    defect = _DEFECT_COLUMNS.get(args.defect)
    if defect is None:
        raise DataError(f"unknown defect {args.defect!r}")
    model = load_model(args.patch)
    raster = load(args.image)
    heat = localize(model, raster, defect, stride=args.stride)
    lo, hi = float(heat.data.min()), float(heat.data.max())
    span = hi - lo if hi > lo else 1.0
    normalized = (heat.data - lo) / span
    save(Raster(np.stack([normalized] * 3, axis=-1)), args.out)
    print(f"heat map ({lo:+.3f}..{hi:+.3f}) -> {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    seed = _seed_of(args)
    app = create_app(
        images_dir=args.images,
        sanity_path=args.sanity,
        store_path=args.store,
        seed=seed,
        sanity_fraction=args.sanity_fraction,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    defect_order = [d.value for d in DefectKind]
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        per_defect = payload.get("per_defect", {})
        for name in per_defect:
            if name not in defect_order:
                raise DataError(f"{path}: unknown defect column {name!r}")
        rows.append((os.path.basename(path).rsplit(".", 1)[0], per_defect))

    header = ["report"] + defect_order + ["mean"]
    table = []
    for label, per_defect in rows:
        cells = [label]
        values = []
        for name in defect_order:
            entry = per_defect.get(name)
            if entry and "value" in entry:
                cells.append(f"{entry['value']:.4f}")
                values.append(entry["value"])
            else:
                cells.append("-")
        cells.append(f"{float(np.mean(values)):.4f}" if values else "-")
        table.append(cells)

    widths = [max(len(r[i]) for r in [header] + table) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    text = "\n".join(lines)
    print(text)
    if args.out:
        payload = {
            "columns": header,
            "rows": [dict(zip(header, row)) for row in table],
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defectlab",
        description="Photographic defect toolkit: synthesis, annotation, metrics, models.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="cap on worker parallelism; execution is deterministic at any value",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate base corpus and graded defect sequences")
    p.add_argument("--base-dir", required=True, help="directory of base images (generated if empty)")
    p.add_argument("--out-dir", required=True, help="output dataset directory")
    p.add_argument("--defects", default="all", help="comma-separated sequence kinds or 'all'")
    p.add_argument("--levels", default="auto", help="level policy (auto: 11, 21 for saturation)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=50, help="base images to generate")
    p.add_argument("--size", type=int, default=128, help="base image side length")
    p.add_argument("--config", default=None, help="JSON config file mirroring flag names")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("aggregate", help="aggregate annotation JSONL into ground-truth CSV")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-annotators", type=int, default=5)
    p.add_argument("--rejects", default=None, help="write rejected (image, defect) pairs here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("consistency", help="five-worker agreement statistics")
    p.add_argument("--annotations", required=True)
    p.add_argument("--batches", default=None, help="JSON mapping worker_id -> batch id")
    p.add_argument("--out", required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--fdr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_consistency)

    p = sub.add_parser("train", help="train holistic and patch columns")
    p.add_argument("--manifest", required=True, help="synth manifest JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss", choices=("infogain", "xent", "l2"), default="infogain")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict seven severity scores for an image")
    p.add_argument("--holistic", required=True)
    p.add_argument("--patch", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--k", type=int, default=10, help="test patches per image")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="cross-class ranking correlation of predictions")
    p.add_argument("--pred", required=True, help="CSV: image_id + defect columns")
    p.add_argument("--gt", required=True, help="CSV: image_id + defect columns")
    p.add_argument("--metric", default="cross-class-rho")
    p.add_argument("--reps", type=int, default=15000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="classical single-defect estimator over a directory")
    p.add_argument("--method", choices=("noise", "blur", "haze"), required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("localize", help="defect heat map from the patch model")
    p.add_argument("--patch", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--defect", required=True)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--images", required=True)
    p.add_argument("--sanity", default=None, help="sanity pool JSONL")
    p.add_argument("--store", required=True, help="append-only annotation store JSONL")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sanity-fraction", type=float, default=0.1)
    p.add_argument("--ui", default=None, help="static directory for the annotation UI")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="render eval reports as a defect-by-defect table")
    p.add_argument("reports", nargs="+", help="eval report JSON files")
    p.add_argument("--out", default=None, help="also write the table as JSON")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config_overrides(parser, args)
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, PermissionError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        import traceback

        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
