"""Command-line surface: flimsr <subcommand>.

Subcommands: phantom, degrade, train, train-bbdm, infer, eval, spectrum,
compare, pipeline.  All outputs are FLIMB, CSV, or JSON; reporting
subcommands also render PNG figures next to their outputs unless
``--no-plot`` is given.  Exit codes: 0 success, 1 validation/runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import torch

from . import __version__
from .bbdm import BbdmConfig, bbdm_infer, schedule, train_bbdm
from .checkpoint import load_model
from .datasetio import collect_eval_pairs, degrade_dataset, load_training_pairs, save_patient_records
from .flimb import read_flimb, write_flimb
from .metrics import MetricConstants, MetricReport, evaluate, radial_power_spectrum, spectrum_to_csv
from .phantom import PhantomSpec, generate_phantom
from .pipeline import ExperimentConfig, compare_reports, run_pipeline
from .plots import save_metric_report_figure, save_spectrum_figure, save_ttest_figure
from .preprocess import load_stats
from .training import TrainConfig, infer, train


def _add_plot_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-plot", action="store_true", help="skip the PNG figure")


def _check_k(k: int) -> int:
    if not 2 <= k <= 7:
        raise ValueError(f"k out of supported range 2..7: {k}")
    return k


def cmd_phantom(args: argparse.Namespace) -> int:
    spec = PhantomSpec(
        n_patients=args.n_patients,
        fovs_per_patient=args.fovs_per_patient,
        fov_size=args.fov_size,
        lifetime_range=(args.lifetime_range[0], args.lifetime_range[1]),
        structure_scales=tuple(args.structure_scales),
        cross_channel_correlation=args.correlation,
    )
    records = generate_phantom(spec, args.seed)
    written = save_patient_records(records, args.out)
    print(f"wrote {len(written)} fields of view for {len(records)} patients to {args.out}")
    return 0


def cmd_degrade(args: argparse.Namespace) -> int:
    _check_k(args.k)
    stats = degrade_dataset(args.in_dir, args.out, args.k, args.q)
    print(f"degraded {len(stats)} fields of view at k={args.k} into {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    _check_k(args.k)
    config = TrainConfig(
        k=args.k,
        alpha=args.alpha,
        batch_size=args.batch_size,
        steps=args.steps,
        seed=args.seed,
        checkpoint_interval=args.checkpoint_interval,
        base_channels=args.base_channels,
        levels=args.levels,
        allow_custom_alpha=args.alpha is not None,
    )
    patients = set(args.patients) if args.patients else None
    pairs = load_training_pairs(args.data, args.k, args.patch_px, patients)
    train(config, pairs, out_dir=args.out, stats_ref=str(args.data))
    print(f"trained cGAN on {len(pairs)} pairs; checkpoints in {args.out}")
    return 0


def cmd_train_bbdm(args: argparse.Namespace) -> int:
    _check_k(args.k)
    config = BbdmConfig(
        k=args.k,
        T=args.T,
        s=args.s,
        batch_size=args.batch_size,
        steps=args.steps,
        seed=args.seed,
        base_channels=args.base_channels,
        levels=args.levels,
        sample_steps=args.sample_steps,
    )
    patients = set(args.patients) if args.patients else None
    pairs = load_training_pairs(args.data, args.k, args.patch_px, patients)
    train_bbdm(config, pairs, out_dir=args.out, stats_ref=str(args.data))
    print(f"trained BBDM denoiser on {len(pairs)} pairs; checkpoint in {args.out}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    module, meta = load_model(args.ckpt)
    if args.model and args.model != {"generator": "cgan"}.get(meta["kind"], "bbdm"):
        raise ValueError(f"--model {args.model} does not match checkpoint kind {meta['kind']}")
    lr_image = read_flimb(args.in_path)
    if args.stats:
        clip_stats, norm_stats = load_stats(args.stats)
        lr_image = norm_stats.apply(clip_stats.apply(lr_image), clamp=True)
    elif not args.pre_normalized:
        raise ValueError(
            "missing preprocessing statistics: pass --stats <stats.json> or "
            "--pre-normalized if the input is already clipped and normalized"
        )
    if args.target_hw:
        target_hw = (args.target_hw[0], args.target_hw[1])
    else:
        k = meta.get("k")
        if k is None:
            raise ValueError("checkpoint sidecar lacks k; pass --target-hw H W")
        target_hw = (lr_image.height * k, lr_image.width * k)
    if meta["kind"] == "generator":
        out_image = infer(module, lr_image, target_hw)
    else:
        sched = schedule(meta.get("T", 1000), meta.get("s", 1.0))
        out_image = bbdm_infer(module, lr_image, target_hw, sched, seed=args.seed, steps=args.sample_steps)
    write_flimb(out_image, args.out)
    print(f"wrote {out_image.n_channels}x{out_image.height}x{out_image.width} image to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    preds, targets, ids = collect_eval_pairs(args.pred, args.target)
    report = evaluate(preds, targets, MetricConstants(), args.ssim_mode, pair_ids=ids)
    report.save(args.out)
    if not args.no_plot:
        fig_path = Path(args.out).with_suffix(".png")
        save_metric_report_figure(report, fig_path)
        print(f"figure: {fig_path}")
    agg = report.aggregate()["modality_means"]
    for modality, values in agg.items():
        print(
            f"{modality}: mse={values['mse']:.6g} psnr={values['psnr']:.4g} "
            f"ssim={values['ssim']:.4g}"
        )
    print(f"report: {args.out}")
    return 0


def cmd_spectrum(args: argparse.Namespace) -> int:
    image = read_flimb(args.in_path)
    spectrum = radial_power_spectrum(image.channel(args.channel))
    spectrum_to_csv(spectrum, args.out)
    if not args.no_plot:
        fig_path = Path(args.out).with_suffix(".png")
        save_spectrum_figure({args.channel: spectrum}, fig_path, title=f"{args.channel} spectrum")
        print(f"figure: {fig_path}")
    print(f"spectrum: {args.out} ({len(spectrum.bin_centers)} bins)")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    report_a = MetricReport.load(args.a)
    report_b = MetricReport.load(args.b)
    doc = compare_reports(report_a, report_b)
    doc["a"] = str(args.a)
    doc["b"] = str(args.b)
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if not args.no_plot:
        fig_path = Path(args.out).with_suffix(".png")
        save_ttest_figure(doc["tests"], fig_path)
        print(f"figure: {fig_path}")
    n_sig = sum(
        1
        for per_channel in doc["tests"].values()
        for entry in per_channel.values()
        if entry["verdict"] != "not-significant"
    )
    print(f"t-tests: {args.out} ({n_sig} significant of "
          f"{sum(len(v) for v in doc['tests'].values())})")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.k is not None:
        config.k = args.k
        config.validate()
    out_dir = args.out or config.out_dir
    if not out_dir:
        raise ValueError("no output directory: set out_dir in the config or pass --out")
    manifest = run_pipeline(config, out_dir)
    print(f"pipeline finished; manifest: {manifest.artifacts['manifest']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flimsr",
        description="Multi-channel pixel super-resolution for FLIM: phantoms, "
        "degradation, cGAN/BBDM training, inference, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"flimsr {__version__}")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="torch thread count (also via FLIMSR_THREADS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic patient phantoms")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-patients", type=int, default=4)
    p.add_argument("--fovs-per-patient", type=int, default=2)
    p.add_argument("--fov-size", type=int, default=256)
    p.add_argument("--lifetime-range", type=float, nargs=2, default=[0.0, 10.0])
    p.add_argument("--structure-scales", type=float, nargs="+", default=[4.0, 12.0, 32.0])
    p.add_argument("--correlation", type=float, default=0.6)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("degrade", help="block-average and preprocess a dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=99.5, help="clip percentile")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train the cGAN on a degraded dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--patch-px", type=int, default=256)
    p.add_argument("--checkpoint-interval", type=int, default=0)
    p.add_argument("--patients", nargs="*", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-bbdm", help="train the diffusion baseline")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--patch-px", type=int, default=256)
    p.add_argument("--sample-steps", type=int, default=0)
    p.add_argument("--patients", nargs="*", default=None)
    p.set_defaults(func=cmd_train_bbdm)

    p = sub.add_parser("infer", help="super-resolve one FLIMB image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=["cgan", "bbdm"], default=None)
    p.add_argument("--stats", default=None, help="preprocessing stats JSON")
    p.add_argument("--pre-normalized", action="store_true")
    p.add_argument("--target-hw", type=int, nargs=2, default=None)
    p.add_argument("--seed", type=int, default=0, help="diffusion sampling seed")
    p.add_argument("--sample-steps", type=int, default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metric report for predictions vs targets")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ssim-mode", choices=["global", "windowed"], default="global")
    _add_plot_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="radially averaged power spectrum")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--channel", default="LT2")
    p.add_argument("--out", required=True)
    _add_plot_flag(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("compare", help="paired t-tests between two reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    _add_plot_flag(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pipeline", help="run the full experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="overrides the config's out_dir")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get("FLIMSR_THREADS"):
        threads = int(os.environ["FLIMSR_THREADS"])
    if threads is not None:
        torch.set_num_threads(max(1, threads))
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"flimsr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
