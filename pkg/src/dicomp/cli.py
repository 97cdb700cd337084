"""Command-line interface: train, compress, decompress, evaluate, rd-curve, bdrate.

Every run is reproducible from the config file and seed. Exit codes: 0 on
success, 1 on internal errors (corrupt streams, failed metrics), 2 on usage
or configuration errors.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from .autoencoder import EncoderSpec
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .codec import FILE_EXTENSION, CompressedImage, compress_image, decompress_image
from .data import extract_patches
from .errors import DicompError
from .image_io import list_image_paths, load_image, load_images_from_dir, save_image
from .losses import LossWeights
from .metrics import RDCurve, bd_rate, bpp, ms_ssim
from .rdo import RatePoint, pareto_front, read_rate_points, select_model, write_rate_points
from .training import TrainingSchedule, evaluate_checkpoint, train

ENV_MODEL_DIR = "DICOMP_MODEL_DIR"


class UsageError(Exception):
    """Bad arguments, config, or missing inputs; exits with code 2."""


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DicompError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dicomp",
        description="Learned image compression: training, coding, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a checkpoint family from a config file")
    p.add_argument("--config", required=True, help="JSON config path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compress", help=f"compress an image to a {FILE_EXTENSION} stream")
    p.add_argument("input", help="input image (PNG)")
    p.add_argument("-m", "--models", help=f"model directory (or ${ENV_MODEL_DIR})")
    p.add_argument("-o", "--output", help=f"output path (default: input with {FILE_EXTENSION})")
    p.add_argument("--target-bpp", type=float, help="pick the best model within this bit budget")
    p.add_argument("--model-id", type=int, help="force a specific model id")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help=f"decode a {FILE_EXTENSION} stream back to PNG")
    p.add_argument("input", help=f"input {FILE_EXTENSION} stream")
    p.add_argument("-m", "--models", help=f"model directory (or ${ENV_MODEL_DIR})")
    p.add_argument("-o", "--output", help="output PNG path (default: input with .png)")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("evaluate", help="RD report over an image set, with optional baselines")
    p.add_argument("images", help="directory of test images")
    p.add_argument("-m", "--models", help=f"model directory (or ${ENV_MODEL_DIR})")
    p.add_argument("-o", "--output", default="report", help="report directory")
    p.add_argument("--baseline", action="append", default=[],
                   metavar="NAME=CSV", help="baseline RD curve to compare against")
    p.add_argument("--db", action="store_true",
                   help="integrate BD-rate over -10*log10(1 - MS-SSIM)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rd-curve", help="write the averaged RD point per model as CSV")
    p.add_argument("images", help="directory of test images")
    p.add_argument("-m", "--models", help=f"model directory (or ${ENV_MODEL_DIR})")
    p.add_argument("-o", "--output", default="rd_curve.csv", help="output CSV path")
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("bdrate", help="BD-rate between two RD-curve CSV files")
    p.add_argument("--reference", required=True, help="reference curve CSV")
    p.add_argument("--test", required=True, help="test curve CSV")
    p.add_argument("--db", action="store_true",
                   help="integrate over -10*log10(1 - quality)")
    p.set_defaults(func=cmd_bdrate)
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")


def _build(section_cls, config: dict, section: str):
    try:
        return section_cls(**config.get(section, {}))
    except TypeError as exc:
        raise UsageError(f"bad '{section}' section: {exc}")
    except DicompError as exc:
        raise UsageError(f"bad '{section}' section: {exc}")


def cmd_train(args) -> int:
    config = _load_config(args.config)
    for key in ("data_dir", "out_dir"):
        if key not in config:
            raise UsageError(f"config is missing required key '{key}'")
    data_dir = Path(config["data_dir"])
    if not data_dir.is_dir():
        raise UsageError(f"dataset path does not exist: {data_dir}")
    images = load_images_from_dir(data_dir)
    if not images:
        raise UsageError(f"no images found under {data_dir}")

    seed = int(config.get("seed", 0))
    patches_cfg = config.get("patches", {})
    spec = _build(EncoderSpec, config, "spec")
    schedule = _build(TrainingSchedule, config, "schedule")
    weights = _build(LossWeights, config, "weights")
    out_dir = Path(config["out_dir"])

    dataset = extract_patches(
        images,
        count=int(patches_cfg.get("count", 512)),
        seed=seed,
        patch_size=int(patches_cfg.get("size", 128)),
        augment=bool(patches_cfg.get("augment", True)))

    print(f"training {schedule.total_epochs} epochs on {len(dataset)} patches "
          f"({len(images)} source images)")
    checkpoints = train(dataset, spec, schedule, weights, out_dir=out_dir,
                        seed=seed, log=print)

    val_cfg = config.get("validation", {})
    val_count = int(val_cfg.get("count", 16))
    if val_count > 0:
        val_set = extract_patches(images, count=val_count, seed=seed + 1,
                                  patch_size=int(patches_cfg.get("size", 128)),
                                  augment=False)
        val_images = [val_set[i] for i in range(len(val_set))]
        points = []
        for ckpt in checkpoints:
            point = evaluate_checkpoint(ckpt, val_images)
            ckpt.rate_point = point
            save_checkpoint(ckpt, out_dir / f"model_{ckpt.model_id:03d}.pt")
            points.append(point)
            print(f"model {ckpt.model_id:3d}  lambda {ckpt.lambda_rate:.6f}  "
                  f"{point.bpp:.4f} bpp  ms-ssim {point.quality:.4f}")
        write_rate_points(points, out_dir / "rd_points.csv")
    print(f"wrote {len(checkpoints)} checkpoints to {out_dir}")
    return 0


def _model_dir(args) -> Path:
    path = args.models or os.environ.get(ENV_MODEL_DIR)
    if not path:
        raise UsageError(f"no model directory: pass -m/--models or set ${ENV_MODEL_DIR}")
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"model directory does not exist: {path}")
    return path


def _load_models(model_dir: Path) -> dict[int, Checkpoint]:
    models = {}
    for path in sorted(model_dir.glob("*.pt")):
        ckpt = load_checkpoint(path)
        models[ckpt.model_id] = ckpt
    if not models:
        raise UsageError(f"no checkpoints (*.pt) found under {model_dir}")
    return models


def _choose_model(models: dict[int, Checkpoint], model_id) -> Checkpoint:
    if model_id is not None:
        if model_id not in models:
            raise UsageError(f"model id {model_id} not in {sorted(models)}")
        return models[model_id]
    points = [c.rate_point for c in models.values() if c.rate_point is not None]
    if points:
        best = max(points, key=lambda p: p.quality)
        return models[best.model_id]
    return models[max(models)]


def _select_per_image(models: dict[int, Checkpoint], image, target_bpp):
    """Content-adaptive selection: measure every model on this image and pick
    the best one within the budget. Returns (checkpoint, its stream)."""
    import warnings

    streams = {}
    points = []
    for mid in sorted(models):
        cs = compress_image(image, models[mid])
        streams[mid] = cs
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            quality = ms_ssim(decompress_image(cs, models[mid]), image)
        points.append(RatePoint(bpp=bpp(cs), quality=quality, model_id=mid))
    chosen = select_model(pareto_front(points), target_bpp)
    return models[chosen], streams[chosen]


def cmd_compress(args) -> int:
    models = _load_models(_model_dir(args))
    try:
        image = load_image(args.input)
    except (FileNotFoundError, OSError) as exc:
        raise UsageError(f"cannot read image {args.input}: {exc}")
    if args.target_bpp is not None and args.model_id is None:
        ckpt, cs = _select_per_image(models, image, args.target_bpp)
    else:
        ckpt = _choose_model(models, args.model_id)
        cs = compress_image(image, ckpt)
    out = Path(args.output) if args.output else Path(args.input).with_suffix(FILE_EXTENSION)
    cs.write(out)
    print(f"model {ckpt.model_id}: {out} ({cs.total_bytes} bytes, {bpp(cs):.4f} bpp)")
    return 0


def cmd_decompress(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except FileNotFoundError:
        raise UsageError(f"no such file: {args.input}")
    cs = CompressedImage.from_bytes(data)
    models = _load_models(_model_dir(args))
    if cs.header.model_id not in models:
        raise UsageError(f"stream needs model {cs.header.model_id}, "
                         f"directory has {sorted(models)}")
    recon = decompress_image(cs, models[cs.header.model_id])
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".png")
    save_image(recon, out)
    print(f"decoded {cs.header.width}x{cs.header.height} image to {out}")
    return 0


def _measure(models: dict[int, Checkpoint], image_paths) -> tuple[list, list[RatePoint]]:
    """Per-image rows (model_id, image, bpp, quality) and averaged points."""
    import warnings

    rows = []
    averaged = []
    for mid in sorted(models):
        ckpt = models[mid]
        bpps, quals = [], []
        for path in image_paths:
            image = load_image(path)
            cs = compress_image(image, ckpt)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                quality = ms_ssim(decompress_image(cs, ckpt), image)
            rows.append((mid, path.name, bpp(cs), quality))
            bpps.append(bpp(cs))
            quals.append(quality)
        avg = RatePoint(bpp=sum(bpps) / len(bpps), quality=sum(quals) / len(quals),
                        model_id=mid)
        rows.append((mid, "average", avg.bpp, avg.quality))
        averaged.append(avg)
    return rows, averaged


def cmd_evaluate(args) -> int:
    import csv

    models = _load_models(_model_dir(args))
    image_paths = list_image_paths(args.images)
    if not image_paths:
        raise UsageError(f"no images found under {args.images}")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows, averaged = _measure(models, image_paths)
    with open(out_dir / "per_image.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "image", "bpp", "ms_ssim"])
        writer.writerows(rows)
    write_rate_points(averaged, out_dir / "rd_points.csv")
    print(f"evaluated {len(models)} models on {len(image_paths)} images -> {out_dir}")

    baselines = []
    for spec_str in args.baseline:
        name, _, path = spec_str.partition("=")
        if not path:
            raise UsageError(f"--baseline wants NAME=CSV, got {spec_str!r}")
        baselines.append((name, read_rate_points(path)))

    transform = "db" if args.db else "none"
    bd_rows = []
    if baselines:
        try:
            ours = RDCurve(tuple(averaged))
        except ValueError as exc:
            print(f"cannot build our RD curve for BD-rate: {exc}", file=sys.stderr)
            ours = None
        for name, pts in baselines:
            if ours is None:
                bd_rows.append((name, "error: no usable curve"))
                continue
            try:
                value = bd_rate(RDCurve(tuple(pts)), ours, quality_transform=transform)
                bd_rows.append((name, f"{value:.4f}"))
                print(f"BD-rate vs {name}: {value:+.4f}%")
            except ValueError as exc:
                bd_rows.append((name, f"error: {exc}"))
                print(f"BD-rate vs {name}: failed ({exc})", file=sys.stderr)
        with open(out_dir / "bd_rates.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["baseline", "bd_rate_percent"])
            writer.writerows(bd_rows)

    _plot_curves(out_dir / "rd_curve.png", averaged, baselines)
    return 0


def _plot_curves(path: Path, averaged, baselines) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    pts = sorted(averaged, key=lambda p: p.bpp)
    ax.plot([p.bpp for p in pts], [p.quality for p in pts], "o-", label="this codec")
    for name, bpts in baselines:
        bpts = sorted(bpts, key=lambda p: p.bpp)
        ax.plot([p.bpp for p in bpts], [p.quality for p in bpts], "s--", label=name)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("MS-SSIM")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_rd_curve(args) -> int:
    models = _load_models(_model_dir(args))
    image_paths = list_image_paths(args.images)
    if not image_paths:
        raise UsageError(f"no images found under {args.images}")
    _, averaged = _measure(models, image_paths)
    write_rate_points(averaged, args.output)
    for p in averaged:
        print(f"model {p.model_id:3d}  {p.bpp:.4f} bpp  ms-ssim {p.quality:.4f}")
    print(f"wrote {args.output}")
    return 0


def cmd_bdrate(args) -> int:
    for path in (args.reference, args.test):
        if not Path(path).is_file():
            raise UsageError(f"no such file: {path}")
    reference = RDCurve(tuple(read_rate_points(args.reference)))
    test = RDCurve(tuple(read_rate_points(args.test)))
    value = bd_rate(reference, test, quality_transform="db" if args.db else "none")
    print(f"{value:+.4f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
