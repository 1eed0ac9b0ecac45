"""Command-line entry points.

Subcommands: gen-data, train, eval, reconstruct, fbp. Every run writes a
flat ``run.json`` manifest of the resolved configuration and seed next to
its outputs. Exit codes: 0 success, 2 usage/validation error, 3 runtime
numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io
from .ffc import load_checkpoint, save_checkpoint
from .phantoms import build_dataset, load_dataset, save_dataset
from .tomo import FILTER_KINDS, ScanGeometry, Sinogram, fbp, subsample_views
from .training import (
    LOG_HEADER,
    NumericalError,
    TrainConfig,
    config_as_flat_dict,
    evaluate_samples,
    format_log_row,
    load_config_file,
    reconstruct_image,
    train_baseline,
    train_distilled,
)

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _write_manifest(directory, payload):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "run.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _cmd_gen_data(args):
    geom = ScanGeometry(
        image_size=args.size,
        n_detectors=args.detectors if args.detectors else (3 * args.size) // 2,
        n_full_views=args.full_views,
    )
    samples = build_dataset(args.count, geom, args.views, args.teacher_mult,
                            args.i0, args.seed)
    save_dataset(samples, args.out, args.seed, args.views, args.teacher_mult)
    _write_manifest(args.out, {
        "command": "gen-data", "count": args.count, "size": args.size,
        "views": args.views, "teacher_mult": args.teacher_mult, "i0": args.i0,
        "seed": args.seed, "detectors": geom.n_detectors,
        "full_views": geom.n_full_views,
    })
    return 0


def _cmd_train(args):
    samples = load_dataset(args.data)
    if not samples:
        raise ValueError(f"dataset at {args.data!r} is empty")
    cfg = load_config_file(args.config) if args.config else TrainConfig()
    cfg.validate()
    if args.baseline:
        cfg.alpha = 0.0
        cfg.beta = 0.0
    os.makedirs(args.out, exist_ok=True)

    start_iteration = 0
    if args.resume:
        start_iteration = _read_resume_iteration(args.resume)

    log_path = os.path.join(args.out, "log.csv")
    mode = "a" if args.resume and os.path.exists(log_path) else "w"
    with open(log_path, mode) as log_file:
        if mode == "w":
            log_file.write(LOG_HEADER + "\n")

        def log_row(row):
            shifted = dict(row)
            shifted["iter"] = row["iter"] + start_iteration
            log_file.write(format_log_row(shifted) + "\n")

        train = train_baseline if args.baseline else train_distilled
        encoder, decoder, rows = train(samples, cfg, log_callback=log_row)

    ckpt_path = os.path.join(args.out, "student.gdc")
    save_checkpoint(ckpt_path, cfg.model, encoder, decoder)
    io.save_named_arrays(
        os.path.join(args.out, "state.gdc"),
        {"iteration": np.asarray([start_iteration + len(rows)], dtype=np.float32)},
    )
    manifest = config_as_flat_dict(cfg)
    manifest.update({"command": "train", "baseline": bool(args.baseline),
                     "data": args.data, "resumed_from": args.resume or ""})
    _write_manifest(args.out, manifest)
    return 0


def _read_resume_iteration(path):
    arrays = io.load_named_arrays(path)
    if "iteration" not in arrays:
        raise ValueError(f"{path!r} is not a training state file")
    return int(arrays["iteration"][0])


def _format_metric(value):
    return f"{value:.6g}"


def _cmd_eval(args):
    samples = load_dataset(args.data)
    if not samples:
        raise ValueError(f"dataset at {args.data!r} is empty")
    _, encoder, decoder = load_checkpoint(args.ckpt)
    rows = evaluate_samples(encoder, decoder, samples)
    columns = ["psnr_fbp", "psnr_model", "ssim_fbp", "ssim_model",
               "rmse_fbp", "rmse_model"]
    with open(args.out, "w") as fh:
        fh.write("id," + ",".join(columns) + "\n")
        for row in rows:
            fh.write(str(row["id"]) + "," +
                     ",".join(_format_metric(row[c]) for c in columns) + "\n")
        fh.write("mean," + ",".join(
            _format_metric(float(np.mean([row[c] for row in rows]))) for c in columns
        ) + "\n")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), {
        "command": "eval", "data": args.data, "ckpt": args.ckpt, "out": args.out,
        "samples": len(rows),
    })
    return 0


def _cmd_reconstruct(args):
    _, encoder, decoder = load_checkpoint(args.ckpt)
    image = io.load_grid(args.infile)
    if image.ndim != 2:
        raise ValueError("reconstruct expects a 2-D image grid")
    output = reconstruct_image(encoder, decoder, image)
    io.save_pgm(args.out, output)
    base, _ = os.path.splitext(args.out)
    io.save_grid(base + ".gdi", output)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), {
        "command": "reconstruct", "ckpt": args.ckpt, "in": args.infile,
        "out": args.out,
    })
    return 0


def _cmd_fbp(args):
    values, angles = io.load_sinogram(args.sino)
    sino = Sinogram(values, angles)
    geom = ScanGeometry(
        image_size=args.size,
        n_detectors=values.shape[1],
        n_full_views=max(sino.n_views, 2),
    )
    sparse = subsample_views(sino, args.views)
    image = fbp(sparse, geom, args.filter)
    io.save_grid(args.out, image)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), {
        "command": "fbp", "sino": args.sino, "views": args.views,
        "filter": args.filter, "out": args.out, "size": args.size,
    })
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsect",
        description="Sparse-view CT simulation, training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom training dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--views", type=int, default=18)
    p.add_argument("--teacher-mult", type=int, default=2)
    p.add_argument("--i0", type=float, default=1e8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detectors", type=int, default=0)
    p.add_argument("--full-views", type=int, default=180)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the reconstruction network")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true",
                   help="pixel-loss-only training (no distillation)")
    p.add_argument("--resume", default="",
                   help="training state file whose iteration counter to continue")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="report metrics for a trained checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("reconstruct", help="run one image through the network")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("fbp", help="classical filtered back projection")
    p.add_argument("--sino", required=True)
    p.add_argument("--views", type=int, required=True)
    p.add_argument("--filter", choices=FILTER_KINDS, default="ram-lak")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=_cmd_fbp)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
