"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data or format error,
3 numeric/convergence error.  Every failure prints one diagnostic line to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .augmentation import build_augmentation_context, draw_augmented_sample
from .cfe import cfe_histogram, guidance_illuminants
from .dataio import (
    generate_synthetic_dataset,
    load_camera_metadata,
    load_manifest,
    read_pfm,
    write_camera_metadata,
    write_manifest,
    write_pfm,
    write_pfm_array,
)
from .errors import (
    ConfigError,
    CrossccError,
    DomainError,
    EstimationError,
    FormatError,
    LoadError,
    NumericError,
    ShapeError,
    StateError,
)
from .estimator import (
    BackboneConfig,
    Model,
    camera_fingerprint,
    estimate_illuminant,
    load_model,
    save_model,
)
from .cfe import CfeEncoderConfig
from .histogram import CFE_SPEC, QUERY_SPEC, HistogramSpec
from .metrics import evaluate_manifest
from .training import TrainConfig, train

_USAGE_ERRORS = (ConfigError, argparse.ArgumentError)
_DATA_ERRORS = (DomainError, FormatError, LoadError, ShapeError,
                EstimationError, StateError)
_NUMERIC_ERRORS = (NumericError,)


def _widths(text: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad width list {text!r}") from exc
    if len(parts) != 4:
        raise ConfigError("width lists need exactly 4 entries")
    return parts


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="crosscc",
        description="Cross-camera color constancy toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--cameras", type=int, required=True)
    sp.add_argument("--scenes", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("fingerprint", help="print a camera's fingerprint")
    sp.add_argument("--camera", required=True, help="camera metadata file")
    sp.add_argument("--model", required=True, help="checkpoint file")
    sp.add_argument("--csv", help="also write the locus histogram as CSV")

    sp = sub.add_parser("train", help="train a model on a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="checkpoint output path")
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--lr", type=float, default=5e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--alpha-mode", choices=("none", "one", "uniform"),
                    default="uniform")
    sp.add_argument("--bins", type=int, default=64)
    sp.add_argument("--backbone-widths", type=_widths, default=(16, 32, 64, 128))
    sp.add_argument("--cfe-widths", type=_widths, default=(8, 16, 32, 64))

    sp = sub.add_parser("infer", help="estimate one image's illuminant")
    sp.add_argument("--image", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--heatmap", help="write the confidence map as PFM")

    sp = sub.add_parser("eval", help="evaluate a model or baseline on a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--model")
    sp.add_argument("--baseline", choices=("gray-world",))
    sp.add_argument("--csv", help="write per-image errors and stats as CSV")

    sp = sub.add_parser("augment", help="materialize an augmented dataset")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, help="samples (default: manifest size)")
    sp.add_argument("--alpha-mode", choices=("one", "uniform"), default="uniform")

    sp = sub.add_parser("heatmap", help="export the confidence map for one image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    return p


def _cmd_synth(args) -> int:
    manifest = generate_synthetic_dataset(
        args.out, n_cameras=args.cameras, scenes_per_camera=args.scenes,
        seed=args.seed)
    print(manifest)
    return 0


def _cmd_fingerprint(args) -> int:
    cal = load_camera_metadata(args.camera)
    model = load_model(args.model)
    f = camera_fingerprint(cal, model)
    print(" ".join(f"{v:.6f}" for v in f))
    if args.csv:
        hist = cfe_histogram(guidance_illuminants(cal), model.cfe_spec)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"v{j}" for j in range(hist.spec.bins)])
            for row in hist.data:
                w.writerow([f"{x:.6f}" for x in row])
    return 0


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs, lr=args.lr,
                      seed=args.seed, alpha_mode=args.alpha_mode)
    query_spec = HistogramSpec(args.bins, QUERY_SPEC.u_min, QUERY_SPEC.u_max,
                               QUERY_SPEC.v_min, QUERY_SPEC.v_max)
    cfe_spec = HistogramSpec(args.bins, CFE_SPEC.u_min, CFE_SPEC.u_max,
                             CFE_SPEC.v_min, CFE_SPEC.v_max)
    model, losses = train(
        manifest, cfg,
        backbone_cfg=BackboneConfig(widths=args.backbone_widths, bins=args.bins),
        cfe_cfg=CfeEncoderConfig(bins=args.bins, widths=args.cfe_widths),
        query_spec=query_spec, cfe_spec=cfe_spec)
    save_model(model, args.out)
    loss_csv = args.out + ".loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss"])
        for i, v in enumerate(losses):
            w.writerow([i, f"{v:.6f}"])
    print(f"saved {args.out} (final train loss {losses[-1]:.6f})")
    return 0


def _cmd_infer(args) -> int:
    cal = load_camera_metadata(args.camera)
    model = load_model(args.model)
    image = read_pfm(args.image)
    est = estimate_illuminant(image, cal, model)
    print("rgb: " + " ".join(f"{v:.6f}" for v in est.rgb))
    print(f"uv: {est.uv[0]:.6f} {est.uv[1]:.6f}")
    if args.heatmap:
        write_pfm_array(args.heatmap, est.heatmap.astype(np.float32))
    return 0


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    rows = []
    if args.model:
        model = load_model(args.model)
        errors, stats = evaluate_manifest(manifest, model=model)
        rows.append(("model", errors, stats))
    if args.baseline:
        errors, stats = evaluate_manifest(manifest, baseline=args.baseline)
        rows.append((args.baseline, errors, stats))
    if not rows:
        raise ConfigError("eval needs --model and/or --baseline")
    header = f"{'estimator':<12} {'mean':>8} {'median':>8} {'trimean':>8} " \
             f"{'best25%':>8} {'worst25%':>9}"
    print(header)
    for name, _, s in rows:
        print(f"{name:<12} {s.mean:8.4f} {s.median:8.4f} {s.trimean:8.4f} "
              f"{s.best25_mean:8.4f} {s.worst25_mean:9.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "image_index", "angular_error_deg"])
            for name, errors, _ in rows:
                for i, e in enumerate(errors):
                    w.writerow([name, i, f"{e:.6f}"])
            w.writerow([])
            w.writerow(["estimator", "mean", "median", "trimean",
                        "best25_mean", "worst25_mean"])
            for name, _, s in rows:
                w.writerow([name] + [f"{v:.6f}" for v in
                                     (s.mean, s.median, s.trimean,
                                      s.best25_mean, s.worst25_mean)])
    return 0


def _cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    rng = np.random.default_rng(args.seed)
    ctx = build_augmentation_context(manifest)
    count = args.count if args.count is not None else len(manifest)
    os.makedirs(args.out, exist_ok=True)
    os.makedirs(os.path.join(args.out, "images"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "cameras"), exist_ok=True)
    records = []
    camera_files = {}
    prov_rows = []
    for i in range(count):
        s = draw_augmented_sample(ctx, rng, args.alpha_mode)
        cam_id = f"aug{i:06d}"
        cal = s.calibration
        meta_rel = os.path.join("cameras", f"{cam_id}.txt")
        write_camera_metadata(os.path.join(args.out, meta_rel),
                              type(cal)(cm_low=cal.cm_low, cm_high=cal.cm_high,
                                        fm_low=cal.fm_low, fm_high=cal.fm_high,
                                        cct_low=cal.cct_low, cct_high=cal.cct_high,
                                        camera_id=cam_id))
        camera_files[cam_id] = meta_rel
        img_rel = os.path.join("images", f"{cam_id}.pfm")
        write_pfm(os.path.join(args.out, img_rel), s.image)
        records.append((img_rel, s.gt_illuminant, cam_id))
        prov_rows.append([cam_id, s.provenance["scene_index"],
                          s.provenance["source_camera"],
                          s.provenance["target_camera"],
                          f"{s.provenance['alpha']:.6f}", args.seed])
    write_manifest(os.path.join(args.out, "manifest.txt"), records, camera_files)
    with open(os.path.join(args.out, "provenance.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "scene_index", "source_camera", "target_camera",
                    "alpha", "seed"])
        w.writerows(prov_rows)
    print(os.path.join(args.out, "manifest.txt"))
    return 0


def _cmd_heatmap(args) -> int:
    cal = load_camera_metadata(args.camera)
    model = load_model(args.model)
    image = read_pfm(args.image)
    est = estimate_illuminant(image, cal, model)
    write_pfm_array(args.out, est.heatmap.astype(np.float32))
    print(args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "fingerprint": _cmd_fingerprint,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "augment": _cmd_augment,
    "heatmap": _cmd_heatmap,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed a diagnostic
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except CrossccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
