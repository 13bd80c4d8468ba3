"""swift-sr command line: upscale, train, eval, bench, inspect.

Heavy modules are imported inside each command so that --threads (or the
SWIFT_SR_THREADS environment variable) can pin BLAS thread counts before
numpy first loads.

Exit codes: 0 success, 1 internal error, 2 user/input error.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

_THREAD_ENV_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


def _apply_threads(threads: int | None) -> None:
    value = threads if threads is not None else os.environ.get("SWIFT_SR_THREADS")
    if value is None:
        return
    value = str(int(value))
    os.environ["SWIFT_SR_THREADS"] = value
    for var in _THREAD_ENV_VARS:
        os.environ[var] = value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swift-sr",
        description="Compact super-resolution GAN: upscaling, training, "
        "evaluation, and latency benchmarking.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker/BLAS threads (env: SWIFT_SR_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("upscale", help="run the generator over images")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="an image file or a directory of images")
    p.add_argument("--output", required=True, help="directory for upscaled images")
    p.add_argument("--scale", type=int, default=None,
                   help="assert the checkpoint upscales by this factor")
    p.add_argument("--reference", default=None,
                   help="directory of ground-truth images; prints per-image psnr/ssim")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("train", help="train generator and discriminator")
    p.add_argument("--data", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--resume", default=None, help="training checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score matched image directories")
    p.add_argument("--sr", required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--luma", action="store_true", help="score BT.601 luma instead of RGB mean")
    p.add_argument("--json", default=None, help="write a JSON summary here")
    p.add_argument("--csv", default=None, help="write the per-image table here")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-frame latency of the generator forward")
    p.add_argument("--model", required=True)
    p.add_argument("--in-res", default="270p",
                   help="input resolution WxH, or preset 270p/540p")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--variant", choices=("dsconv", "standard"), default="dsconv",
                   help="standard rebuilds the dense-convolution twin for comparison")
    p.add_argument("--json", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="parameter audit of a checkpoint")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _load_generator(path):
    from .checkpoint import load_model
    from .errors import FormatError

    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    model, tensors = load_model(path)
    if model.kind != "generator":
        raise FormatError(f"{path} is not a generator checkpoint")
    return model, tensors


def cmd_upscale(args) -> int:
    import numpy as np

    from .data import Image, discover_images, load_image, save_image
    from .metrics import score_pair
    from .tensor import Tensor

    gen, _ = _load_generator(args.model)
    if args.scale is not None and args.scale != gen.cfg.upscale_factor:
        raise UsageError(
            f"checkpoint upscales by {gen.cfg.upscale_factor}, not {args.scale}"
        )
    in_path = args.input
    if os.path.isdir(in_path):
        inputs = discover_images(in_path)
        if not inputs:
            raise UsageError(f"no images found in {in_path}")
    elif os.path.isfile(in_path):
        inputs = [in_path]
    else:
        raise UsageError(f"input not found: {in_path}")
    os.makedirs(args.output, exist_ok=True)

    for path in inputs:
        img = load_image(path)
        x = img.tensor.data / np.float32(255.0)
        y = gen.forward(x, train=False)
        pixels = np.clip(np.rint(y * np.float32(255.0)), 0, 255).astype(np.float32)
        name = os.path.basename(str(path))
        out_path = os.path.join(args.output, name)
        save_image(Image(Tensor(pixels)), out_path)
        line = f"{name}: {img.w}x{img.h} -> {pixels.shape[3]}x{pixels.shape[2]}"
        if args.reference:
            ref_path = os.path.join(args.reference, name)
            if not os.path.exists(ref_path):
                raise UsageError(f"reference image missing for {name}")
            ref = load_image(ref_path)
            p, s = score_pair(pixels, ref.tensor.data)
            line += f"  psnr {p:.3f} dB  ssim {s:.4f}"
        print(line)
    return EXIT_OK


_CONFIG_KEYS: dict[str, callable] = {
    "crop_size": int,
    "scale": int,
    "flip_prob": float,
    "rot90_prob": float,
    "batch_size": int,
    "base_channels": int,
    "num_residual_blocks": int,
    "upscale_factor": int,
    "disc_channels": lambda s: tuple(int(v) for v in s.split(",")),
    "disc_strides": lambda s: tuple(int(v) for v in s.split(",")),
    "pool_size": int,
    "hidden_units": int,
    "g_lr": float,
    "d_lr": float,
    "weight_decay": float,
    "adv_weight": float,
    "adv_reduce": str,
    "plateau_factor": float,
    "plateau_patience": int,
    "min_lr": float,
    "fx_channels": lambda s: tuple(int(v) for v in s.split(",")),
    "fx_strides": lambda s: tuple(int(v) for v in s.split(",")),
    "fx_seed": int,
}


def _parse_config_file(path) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](value.strip())
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {value.strip()!r}")
    return values


def _fit_config_from(values: dict):
    from .data import PipelineConfig
    from .losses import DEFAULT_ADV_WEIGHT, FeatureExtractorConfig
    from .models import DiscriminatorConfig, GeneratorConfig
    from .train import AdamWConfig, FitConfig, PlateauConfig

    pipeline = PipelineConfig(
        crop_size=values.get("crop_size", 96),
        scale=values.get("scale", 4),
        flip_prob=values.get("flip_prob", 0.5),
        rot90_prob=values.get("rot90_prob", 0.5),
    )
    generator = GeneratorConfig(
        base_channels=values.get("base_channels", 64),
        num_residual_blocks=values.get("num_residual_blocks", 16),
        upscale_factor=values.get("upscale_factor", values.get("scale", 4)),
    )
    disc_kwargs = {}
    if "disc_channels" in values:
        disc_kwargs["block_channels"] = values["disc_channels"]
    if "disc_strides" in values:
        disc_kwargs["strides"] = values["disc_strides"]
    discriminator = DiscriminatorConfig(
        pool_size=values.get("pool_size", 6),
        hidden_units=values.get("hidden_units", 1024),
        **disc_kwargs,
    )
    fx_kwargs = {}
    if "fx_channels" in values:
        fx_kwargs["channels"] = values["fx_channels"]
    if "fx_strides" in values:
        fx_kwargs["strides"] = values["fx_strides"]
    if "fx_seed" in values:
        fx_kwargs["seed"] = values["fx_seed"]
    extractor = FeatureExtractorConfig(**fx_kwargs)
    return FitConfig(
        pipeline=pipeline,
        generator=generator,
        discriminator=discriminator,
        extractor=extractor,
        optimizer_g=AdamWConfig(lr=values.get("g_lr", 1e-4),
                                weight_decay=values.get("weight_decay", 1e-2)),
        optimizer_d=AdamWConfig(lr=values.get("d_lr", 1e-4),
                                weight_decay=values.get("weight_decay", 1e-2)),
        plateau=PlateauConfig(
            factor=values.get("plateau_factor", 0.5),
            patience=values.get("plateau_patience", 5),
            min_lr=values.get("min_lr", 1e-7),
        ),
        batch_size=values.get("batch_size", 8),
        adv_weight=values.get("adv_weight", DEFAULT_ADV_WEIGHT),
        adv_reduce=values.get("adv_reduce", "sum"),
    )


def cmd_train(args) -> int:
    from .train import fit

    values = _parse_config_file(args.config) if args.config else {}
    cfg = _fit_config_from(values)
    result = fit(
        args.data, args.val, args.out, args.epochs, args.seed,
        cfg=cfg, resume=args.resume,
    )
    print(f"latest checkpoint: {result.latest_path}")
    if result.best_path:
        print(f"best checkpoint:   {result.best_path}")
    print(f"metric log:        {result.log_path}")
    for record in result.history:
        print(
            f"epoch {record['epoch']}: val_psnr {record['val_psnr']:.3f} dB, "
            f"val_ssim {record['val_ssim']:.4f}, val_perceptual {record['val_perceptual']:.6g}"
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    import math

    from .metrics import evaluate_pair_directory, report_summary_json, report_to_csv

    report = evaluate_pair_directory(args.sr, args.hr, luma=args.luma, workers=args.workers)
    for row in report.rows:
        psnr_text = "inf" if math.isinf(row.psnr) else f"{row.psnr:.4f}"
        print(f"{row.name}: psnr {psnr_text} dB, ssim {row.ssim:.6f}")
    mean_psnr = "inf" if math.isinf(report.psnr_mean) else f"{report.psnr_mean:.4f}"
    print(f"mean over {report.count} pair(s): psnr {mean_psnr} dB, ssim {report.ssim_mean:.6f}")
    if args.csv:
        report_to_csv(report, args.csv)
    if args.json:
        with open(args.json, "w") as f:
            f.write(report_summary_json(report))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import parse_resolution, run_benchmark
    from .models import build_standard_conv_twin

    in_hw = parse_resolution(args.in_res)
    gen, _ = _load_generator(args.model)
    model = gen
    if args.variant == "standard":
        # Timing does not depend on weight values; a seeded twin suffices.
        model = build_standard_conv_twin(gen.cfg, seed=0)
    report = run_benchmark(model, in_hw, iters=args.iters, warmup=args.warmup, seed=args.seed)
    print(report.format_text())
    if args.json:
        with open(args.json, "w") as f:
            f.write(report.to_json())
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .checkpoint import load_model
    from .models import build_standard_conv_twin, count_parameters, parameter_table

    if not os.path.exists(args.model):
        raise UsageError(f"checkpoint not found: {args.model}")
    model, _ = load_model(args.model)

    by_layer: dict[str, int] = {}
    for name, _kind, _shape, count in parameter_table(model):
        layer = name.rsplit(".", 1)[0]
        by_layer[layer] = by_layer.get(layer, 0) + count
    print(f"{model.kind} ({getattr(model, 'variant', '-')}) parameter audit")
    for layer, count in by_layer.items():
        print(f"  {layer:40s} {count:>10d}")
    total = count_parameters(model, include_biases=True)
    no_bias = count_parameters(model, include_biases=False)
    conv_only = count_parameters(model, include_biases=False, conv_only=True)
    print(f"total trainable parameters: {total}")
    print(f"excluding biases:           {no_bias}")
    print(f"conv weights only:          {conv_only}")
    if model.kind == "generator":
        twin = build_standard_conv_twin(model.cfg, seed=0)
        twin_conv = count_parameters(twin, include_biases=False, conv_only=True)
        print(f"standard-conv twin conv weights: {twin_conv}")
        print(f"twin / separable conv-weight ratio: {twin_conv / conv_only:.3f}x")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_threads(args.threads)
    from .errors import ConfigError, FormatError, NonFiniteError, ShapeError

    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FormatError, ShapeError, NonFiniteError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
