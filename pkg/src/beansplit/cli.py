"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import plots
from .dataset import read_manifest
from .errors import DataError, NumericFailure, UnbalancedDesign
from .evaluation import (
    calibrate_threshold,
    evaluate_split_scores,
    lda_baseline,
    metrics_csv,
)
from .imagecore import RgbImage, read_image, write_image
from .measures import DEFAULT_BINS, DEFAULT_CONNECTIVITY, estimate_max_split_area
from .pipeline import Pipeline, PipelineConfig, analyze_image, segment, write_scores
from .segnet.network import ModelKind, NetworkConfig
from .segnet.serialize import load_weights, save_weights, weights_id
from .segnet.train import TrainConfig, class_probability, train_model
from .stats import (
    StudyObservation,
    pearson_r,
    rater_loo_correlations,
    trait_summary,
    write_study_csv,
)

log = logging.getLogger("beansplit")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _finite(obj):
    """Replace NaN/inf by None so the JSON output is strict."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def cmd_train(args) -> int:
    manifest = read_manifest(args.manifest)
    kind = ModelKind.parse(args.model)
    net_cfg = NetworkConfig.from_dict(_read_json(args.net_config)) if args.net_config else NetworkConfig()
    train_cfg = TrainConfig.from_dict(_read_json(args.train_config)) if args.train_config else TrainConfig()
    weights, history = train_model(kind, manifest, net_cfg, train_cfg)
    save_weights(args.out, weights)
    if args.history:
        _write_atomic(args.history, history.to_csv())
        epochs = list(range(1, len(history) + 1))
        plots.line_chart(Path(args.history).with_suffix(".svg"), epochs,
                         {"loss": history.loss, "val AP": history.val_ap},
                         title=f"{kind.value} training", xlabel="epoch")
    print(f"saved {args.out} ({weights.n_params} parameters, id {weights_id(weights)})")
    return 0


def cmd_calibrate(args) -> int:
    manifest = read_manifest(args.manifest)
    bean = load_weights(args.weights[0])
    split = load_weights(args.weights[1])
    if bean.kind is not ModelKind.BEAN_VS_TRAY or split.kind is not ModelKind.SPLIT_VS_SEED_COAT:
        raise DataError("--weights expects the bean model then the split model")
    pairs = manifest.labeled_pairs("val")
    scored = [(class_probability(split, img), mask) for img, mask in pairs]
    curve = calibrate_threshold(scored, args.criterion, args.step, args.exclude_zero)
    best_iou, best_err = curve.value_at_chosen()
    result = {
        "criterion": args.criterion,
        "threshold": curve.chosen,
        "iou": best_iou,
        "bsr_error_pct": best_err,
        "grid_step": args.step,
        "n_images": len(pairs),
        "split_weights": weights_id(split),
        "bean_weights": weights_id(bean),
    }
    _write_atomic(args.out, json.dumps(_finite(result), indent=2) + "\n")
    if args.curve:
        _write_atomic(args.curve, curve.to_csv())
        plots.line_chart(Path(args.curve).with_suffix(".svg"), curve.thresholds,
                         {"IoU": curve.iou, "BSR error (%) / 100": curve.bsr_error_pct / 100.0},
                         title=f"threshold selection ({args.criterion})", xlabel="threshold",
                         marker=curve.chosen)
    print(f"threshold {curve.chosen:.2f} (IoU {best_iou:.4f}, BSR error {best_err:.2f}%)")
    return 0


def cmd_segment(args) -> int:
    pipe = Pipeline.load(PipelineConfig.read(args.config))
    image = read_image(args.image)
    if not isinstance(image, RgbImage):
        raise DataError(f"{args.image} is not a P6 image")
    mask, probs = segment(pipe, image)
    write_image(args.out_mask, mask)
    if args.out_scores:
        write_scores(args.out_scores, probs)
    return 0


def cmd_measure(args) -> int:
    cfg = PipelineConfig.read(args.config)
    pipe = Pipeline.load(cfg)
    images = sorted(Path(args.images).glob("*.ppm"))
    if not images:
        raise DataError(f"no .ppm images in {args.images}")
    n = cfg.n_bins
    lines = [",".join(["image", "bsr", *[f"bsh_{i}" for i in range(1, n + 1)],
                       "n_splits", "split_px", "bean_px"])]
    if args.json_dir:
        Path(args.json_dir).mkdir(parents=True, exist_ok=True)
    if args.plots:
        Path(args.plots).mkdir(parents=True, exist_ok=True)
    for path in images:
        image = read_image(path)
        if not isinstance(image, RgbImage):
            raise DataError(f"{path} is not a P6 image")
        m = analyze_image(pipe, image, path.name)
        lines.append(",".join([path.name, repr(m.bsr), *[repr(b) for b in m.bsh.bins],
                               str(m.n_splits), str(m.split_px), str(m.bean_px)]))
        if args.json_dir:
            _write_atomic(Path(args.json_dir) / f"{path.stem}.json",
                          json.dumps(m.to_json(), indent=2) + "\n")
        if args.plots:
            plots.bsh_chart(Path(args.plots) / f"{path.stem}_bsh.svg", m.bsh.bins,
                            title=f"{path.name}  BSR {m.bsr:.3f}")
        log.info("%s bsr=%.4f splits=%d", path.name, m.bsr, m.n_splits)
    _write_atomic(args.out, "\n".join(lines) + "\n")
    meta = {
        "config_hash": pipe.config_hash,
        "bean_weights": pipe.bean_id,
        "split_weights": pipe.split_id,
        "bean_threshold": cfg.bean_threshold,
        "split_threshold": cfg.split_threshold,
        "M": cfg.max_split_area,
        "N": cfg.n_bins,
        "connectivity": cfg.connectivity,
    }
    _write_atomic(str(args.out) + ".meta.json", json.dumps(meta, indent=2) + "\n")
    return 0


def cmd_eval(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = PipelineConfig.read(args.config)
    pipe = Pipeline.load(cfg)
    pairs = manifest.labeled_pairs("val")
    maps = [class_probability(pipe.split, img) for img, _ in pairs]
    report = evaluate_split_scores(maps, [m for _, m in pairs], cfg.split_threshold,
                                   cfg.max_split_area, cfg.n_bins, cfg.connectivity,
                                   method="pyramid", exclude_zero=args.exclude_zero)
    _write_atomic(args.out, metrics_csv([report]))
    print(metrics_csv([report]), end="")
    return 0


def cmd_baseline_lda(args) -> int:
    manifest = read_manifest(args.manifest)
    train = manifest.labeled_pairs("train")
    val = manifest.labeled_pairs("val")
    if args.config:
        cfg = PipelineConfig.read(args.config)
        M, N, conn = cfg.max_split_area, cfg.n_bins, cfg.connectivity
    else:
        N, conn = args.bins, args.connectivity
        M = args.max_split_area or estimate_max_split_area([m for _, m in train], conn)
    _, report = lda_baseline(train, val, M, N, conn, exclude_zero=args.exclude_zero)
    _write_atomic(args.out, metrics_csv([report]))
    print(metrics_csv([report]), end="")
    return 0


def _read_measures(path) -> tuple[list[dict], list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    if "image" not in fields or "bsr" not in fields:
        raise DataError(f"{path}: expected measure columns image,bsr,bsh_1..N")
    return rows, [f for f in fields if f == "bsr" or f.startswith("bsh_")]


def _complete_genotypes(obs: list[StudyObservation]) -> list[StudyObservation]:
    cells: dict = {}
    for o in obs:
        cells.setdefault(o.genotype, {}).setdefault(o.retort_min, []).append(o)
    retorts = {o.retort_min for o in obs}
    keep = {g for g, by_t in cells.items()
            if set(by_t) == retorts and all(len(v) == 2 for v in by_t.values())}
    return [o for o in obs if o.genotype in keep]


def cmd_stats(args) -> int:
    manifest = read_manifest(args.manifest)
    by_name = {}
    for rec in manifest.records:
        by_name[rec.image_path] = rec
        by_name.setdefault(Path(rec.image_path).name, rec)
    rows, traits = _read_measures(args.measures)
    joined = []
    for row in rows:
        rec = by_name.get(row["image"])
        if rec is None:
            raise DataError(f"measured image {row['image']} is not in the manifest")
        joined.append((rec, row))

    result: dict = {"n_samples": len(joined), "traits": {}}
    pairs = [(float(row["bsr"]), rec.intactness) for rec, row in joined if rec.intactness is not None]
    if len(pairs) >= 2:
        x, y = zip(*pairs)
        result["bsr_vs_intactness"] = {"pearson_r": pearson_r(x, y), "n": len(pairs)}
    if args.ratings:
        with open(args.ratings, newline="", encoding="utf-8") as fh:
            rrows = list(csv.DictReader(fh))
        raters = [c for c in rrows[0] if c != "image"] if rrows else []
        table = np.array([[float(r[c]) if r[c] else np.nan for c in raters] for r in rrows])
        loo = rater_loo_correlations(table)
        result["raters"] = {"loo_pearson_r": dict(zip(raters, loo.tolist())),
                            "mean_r": float(np.mean(loo))}

    all_obs = []
    for trait in traits:
        obs = [StudyObservation(rec.genotype, rec.retort_min, rec.replicate, float(row[trait]),
                                trait, rec.intactness) for rec, row in joined]
        if args.drop_incomplete:
            obs = _complete_genotypes(obs)
        all_obs.extend(obs)
        try:
            result["traits"][trait] = trait_summary(obs, trait)
        except UnbalancedDesign as exc:
            raise DataError(f"{trait}: {exc} (use --drop-incomplete to analyse complete genotypes)")
    _write_atomic(args.out, json.dumps(_finite(result), indent=2) + "\n")
    if args.study_out:
        _write_atomic(args.study_out, write_study_csv(all_obs))
    if args.plots:
        d = Path(args.plots)
        d.mkdir(parents=True, exist_ok=True)
        h2 = [result["traits"][t]["heritability"] or 0.0 for t in traits]
        plots.bar_chart(d / "heritability.svg", h2, traits, "entry-mean heritability", "", "H2")
    print(json.dumps({t: result["traits"][t]["heritability"] for t in traits}))
    return 0


def cmd_synth(args) -> int:
    from .synthetic import write_synthetic_study

    path = write_synthetic_study(args.out, args.genotypes, args.seed, args.size)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beansplit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train the bean or split segmentation model")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model", required=True, choices=["bean", "split"])
    s.add_argument("--net-config")
    s.add_argument("--train-config")
    s.add_argument("--out", required=True)
    s.add_argument("--history")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", help="choose the split threshold on the val partition")
    s.add_argument("--manifest", required=True)
    s.add_argument("--weights", nargs=2, required=True, metavar=("BEAN", "SPLIT"))
    s.add_argument("--criterion", choices=["iou", "bsr"], default="iou")
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--exclude-zero", action="store_true",
                   help="drop images whose true BSR is 0 from the BSR error")
    s.add_argument("--out", required=True)
    s.add_argument("--curve")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("segment", help="3-class mask and class scores for one image")
    s.add_argument("--config", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out-mask", required=True)
    s.add_argument("--out-scores")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("measure", help="BSR and BSH for every image in a directory")
    s.add_argument("--config", required=True)
    s.add_argument("--images", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--json-dir")
    s.add_argument("--plots")
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("eval", help="AP, IoU, BSR and BSH error on the val partition")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--exclude-zero", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("baseline-lda", help="LDA on pixel HSV features, same metrics")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="pipeline config supplying M, N and connectivity")
    s.add_argument("--max-split-area", type=float)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--connectivity", type=int, choices=[4, 8], default=DEFAULT_CONNECTIVITY)
    s.add_argument("--exclude-zero", action="store_true")
    s.set_defaults(func=cmd_baseline_lda)

    s = sub.add_parser("stats", help="correlation, ANOVA and heritability of measured traits")
    s.add_argument("--measures", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--plots")
    s.add_argument("--ratings", help="CSV image,rater_1..rater_k for leave-one-out rater correlation")
    s.add_argument("--drop-incomplete", action="store_true",
                   help="drop genotypes without a complete, duplicated retort series")
    s.add_argument("--study-out", help="also write the long-format study CSV")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("synth", help="write a small synthetic study for trying the pipeline")
    s.add_argument("--out", required=True)
    s.add_argument("--genotypes", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
