"""Command-line front end: degrade, deconv, sweep, metrics, synth."""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .admm import run, run_tv_admm
from .blur import BlurOperator
from .config import CONFIG_KEYS, RunConfig, config_snapshot, load_run_config
from .errors import QdeconvError, UsageError
from .image import (
    Image,
    devectorize,
    make_bumps,
    make_disks,
    make_synthetic,
    read_pgm,
    vectorize,
    write_pgm,
)
from .metrics import QualityReport, psnr, quality_report, rmse, ssim
from .poisson import NoiseSpec, degrade

OUTPUT_DIR_ENV = "QDECONV_OUTPUT_DIR"

# fixed offset between per-realization noise seeds
REALIZATION_SEED_STRIDE = 7919


def _collect_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if getattr(args, "input", None):
        overrides["input"] = args.input
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    return overrides


def _config_from_args(args) -> RunConfig:
    return load_run_config(
        args.config,
        overrides=_collect_overrides(args),
        env_output_dir=os.environ.get(OUTPUT_DIR_ENV),
    )


def _require(cfg: RunConfig, field: str) -> str:
    value = getattr(cfg, field)
    if not value:
        raise UsageError(f"missing required config value {field!r}")
    return value


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(_require(cfg, "output_dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def cmd_degrade(args) -> int:
    cfg = _config_from_args(args)
    clean = read_pgm(_require(cfg, "input"))
    blur = BlurOperator(cfg.psf(), clean.height, clean.width)
    result = degrade(vectorize(clean), blur, cfg.noise_spec())
    out = _out_dir(cfg)
    write_pgm(clean, out / "clean.pgm")
    write_pgm(devectorize(np.clip(result.observed, 0.0, 1.0), clean.height, clean.width),
              out / "degraded.pgm")
    (out / "degraded.meta.txt").write_text(
        f"achieved_snr_db = {_fmt(result.achieved_snr_db)}\n"
        f"scale = {_fmt(result.scale)}\n"
        f"seed = {cfg.seed}\n"
        f"target_snr_db = {_fmt(cfg.snr_db)}\n"
    )
    (out / "psf.txt").write_text(cfg.psf().to_text())
    (out / "config.txt").write_text(config_snapshot(cfg))
    print(
        f"degraded {cfg.input}: achieved {result.achieved_snr_db:.3f} dB "
        f"(target {cfg.snr_db:g} dB), scale {result.scale:.6g} -> {out}"
    )
    return 0


def _locate_inputs(cfg: RunConfig) -> tuple[Path, Path | None]:
    raw = Path(_require(cfg, "input"))
    degraded = raw / "degraded.pgm" if raw.is_dir() else raw
    if not degraded.exists():
        raise UsageError(f"degraded image not found: {degraded}")
    clean = degraded.parent / "clean.pgm"
    return degraded, clean if clean.exists() else None


def _deconv_once(
    cfg: RunConfig, y: np.ndarray, blur: BlurOperator, truth: np.ndarray | None
):
    start = time.perf_counter()
    if cfg.method == "qab_pnp":
        x_hat, trace = run(
            y,
            blur,
            cfg.qab_config(),
            cfg.threshold_spec(),
            cfg.solver_config(),
            truth=truth,
            epsilon=cfg.epsilon,
            use_omp=cfg.use_omp,
        )
    else:
        x_hat, trace = run_tv_admm(
            y,
            blur,
            cfg.solver_config(),
            cfg.tv_weight,
            truth=truth,
            epsilon=cfg.epsilon,
        )
    return x_hat, trace, time.perf_counter() - start


def _summary_lines(cfg, report, trace, wall) -> list[str]:
    return [
        f"method = {cfg.method}",
        f"psnr_db = {_fmt(report.psnr_db)}",
        f"ssim = {_fmt(report.ssim)}",
        f"rmse = {_fmt(report.rmse)}",
        f"iterations = {trace.iterations}",
        f"wall_time_s = {wall:.3f}",
    ]


def cmd_deconv(args) -> int:
    cfg = _config_from_args(args)
    degraded_path, clean_path = _locate_inputs(cfg)
    degraded_img = read_pgm(degraded_path)
    clean_img = read_pgm(clean_path) if clean_path else None
    blur = BlurOperator(cfg.psf(), degraded_img.height, degraded_img.width)
    truth = vectorize(clean_img) if clean_img is not None else None
    out = _out_dir(cfg)

    if cfg.realizations == 1:
        y = vectorize(degraded_img)
        x_hat, trace, wall = _deconv_once(cfg, y, blur, truth)
        restored = devectorize(np.clip(x_hat, 0.0, 1.0), blur.height, blur.width)
        write_pgm(restored, out / "restored.pgm")
        trace.write_csv(out / "trace.csv")
        if truth is not None:
            report = quality_report(clean_img, restored)
        else:
            report = QualityReport(psnr_db=math.nan, ssim=math.nan, rmse=math.nan)
        lines = _summary_lines(cfg, report, trace, wall)
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        print("  ".join(lines))
        return 0

    # multi-realization: re-noise the clean image with derived seeds
    if clean_img is None:
        raise UsageError("realizations > 1 needs clean.pgm next to the degraded input")
    rows = []
    header = "realization,seed,psnr_db,ssim,rmse,iterations,wall_time_s"
    for i in range(cfg.realizations):
        seed_i = cfg.seed + REALIZATION_SEED_STRIDE * i
        spec = NoiseSpec(target_snr_db=cfg.snr_db, seed=seed_i)
        result = degrade(truth, blur, spec)
        x_hat, trace, wall = _deconv_once(cfg, result.observed, blur, truth)
        restored = devectorize(np.clip(x_hat, 0.0, 1.0), blur.height, blur.width)
        write_pgm(restored, out / f"restored_{i:03d}.pgm")
        trace.write_csv(out / f"trace_{i:03d}.csv")
        report = quality_report(clean_img, restored)
        rows.append(
            (i, seed_i, report.psnr_db, report.ssim, report.rmse, trace.iterations, wall)
        )
    with open(out / "stats.csv", "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(
                f"{row[0]},{row[1]},{_fmt(row[2])},{_fmt(row[3])},"
                f"{_fmt(row[4])},{row[5]},{row[6]:.3f}\n"
            )
    psnrs = np.array([r[2] for r in rows])
    ssims = np.array([r[3] for r in rows])
    rmses = np.array([r[4] for r in rows])
    lines = [
        f"method = {cfg.method}",
        f"realizations = {cfg.realizations}",
        f"psnr_db_mean = {_fmt(psnrs.mean())}",
        f"psnr_db_std = {_fmt(psnrs.std(ddof=1))}",
        f"ssim_mean = {_fmt(ssims.mean())}",
        f"ssim_std = {_fmt(ssims.std(ddof=1))}",
        f"rmse_mean = {_fmt(rmses.mean())}",
        f"rmse_std = {_fmt(rmses.std(ddof=1))}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(
        f"{cfg.method}: psnr {psnrs.mean():.2f} +/- {psnrs.std(ddof=1):.2f} dB, "
        f"ssim {ssims.mean():.4f} +/- {ssims.std(ddof=1):.4f} "
        f"({cfg.realizations} realizations) -> {out}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    if args.param not in CONFIG_KEYS:
        raise UsageError(f"unknown sweep parameter {args.param!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("sweep needs at least one value")
    degraded_path, clean_path = _locate_inputs(cfg)
    if clean_path is None:
        raise UsageError("sweep needs clean.pgm next to the degraded input for metrics")
    degraded_img = read_pgm(degraded_path)
    clean_img = read_pgm(clean_path)
    truth = vectorize(clean_img)
    y = vectorize(degraded_img)
    out = _out_dir(cfg)
    rows = []
    for raw in values:
        swept = load_run_config(None, overrides={args.param: raw})
        cfg_i = replace(cfg, **{CONFIG_KEYS[args.param][0]: getattr(swept, CONFIG_KEYS[args.param][0])})
        blur = BlurOperator(cfg_i.psf(), degraded_img.height, degraded_img.width)
        x_hat, trace, wall = _deconv_once(cfg_i, y, blur, truth)
        restored = devectorize(np.clip(x_hat, 0.0, 1.0), blur.height, blur.width)
        basis_size = trace.basis_size if trace.basis_size is not None else math.nan
        rows.append((raw, psnr(clean_img, restored), ssim(clean_img, restored), basis_size, wall))
        print(f"{args.param}={raw}: psnr {rows[-1][1]:.3f} dB ssim {rows[-1][2]:.4f}")
    with open(out / "sweep.csv", "w", encoding="ascii") as fh:
        fh.write("value,psnr_db,ssim,basis_size,wall_time_s\n")
        for raw, p, s, t, wall in rows:
            tcol = str(int(t)) if not math.isnan(float(t)) else "nan"
            fh.write(f"{raw},{_fmt(p)},{_fmt(s)},{tcol},{wall:.3f}\n")
    return 0


def cmd_metrics(args) -> int:
    ref = read_pgm(args.reference)
    test = read_pgm(args.test)
    print(f"{_fmt(psnr(ref, test))},{_fmt(ssim(ref, test))},{_fmt(rmse(ref, test))}")
    return 0


SYNTH_KINDS = {
    "chirp": make_synthetic,
    "bumps": make_bumps,
    "disks": make_disks,
}


def cmd_synth(args) -> int:
    img = SYNTH_KINDS[args.kind](args.size)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_pgm(img, args.out)
    print(f"wrote {args.size}x{args.size} {args.kind} image to {args.out}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a key = value config file")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    p.add_argument("--input", help="input path (overrides config)")
    p.add_argument("--output-dir", dest="output_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdeconv",
        description="Poisson deconvolution with an adaptive eigenbasis denoiser",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="blur an image and add Poisson noise at a target SNR")
    _add_common(p)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("deconv", help="restore a degraded image")
    _add_common(p)
    p.set_defaults(fn=cmd_deconv)

    p = sub.add_parser("sweep", help="re-run deconvolution over one parameter")
    _add_common(p)
    p.add_argument("--param", required=True, help="dotted config key to sweep")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("metrics", help="print psnr_db,ssim,rmse for an image pair")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("synth", help="write a deterministic synthetic test image")
    p.add_argument("--kind", choices=sorted(SYNTH_KINDS), default="chirp")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QdeconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
