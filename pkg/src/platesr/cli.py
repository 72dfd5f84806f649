"""Command-line interface.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .baselines import ExperimentSpec, run_experiment
from .degrade import build_subsets, parse_intervals, read_manifest
from .errors import PlateSrError
from .evaluation import evaluate, load_report_json, report, save_report_json
from .loss import LossConfig
from .network import ATTENTION_CHOICES, ModelConfig, build_network, load_network, save_network
from .ocr import load_toy_ocr, save_toy_ocr, toy_ocr_build, toy_ocr_train
from .pixelops import load_png, pad_and_resize, save_png
from .synthplate import read_corpus, sample_corpus, write_corpus
from .trainer import TrainConfig, train, write_log_csv


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"split must be three comma-separated fractions, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platesr",
        description="License-plate restoration: synthesis, degradation, training, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"platesr {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="render a synthetic plate corpus")
    p.add_argument("--n", type=int, required=True, help="number of plates")
    p.add_argument("--mix", type=float, default=0.5, help="fraction with the second layout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("degrade", help="degrade a corpus into SSIM intervals")
    p.add_argument("--corpus", dest="corpus", required=True, help="corpus directory from synth")
    p.add_argument(
        "--intervals",
        required=True,
        help="comma-separated lo:hi bands, e.g. 0:0.10,0.10:0.25,0.25:0.50,0.50:0.75",
    )
    p.add_argument("--split", type=_parse_split, default=(0.5, 0.25, 0.25),
                   help="train,val,test fractions (default 0.5,0.25,0.25)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--sigma-lo", type=float, default=0.01)
    p.add_argument("--sigma-hi", type=float, default=0.04)
    p.add_argument("--blur", type=float, default=0.0, help="optional pre-blur sigma")

    p = sub.add_parser("train-ocr", help="train the bundled reader on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--width", type=int, default=16)

    p = sub.add_parser("train-sr", help="train the restoration network")
    p.add_argument("--data", required=True, help="degraded dataset directory")
    p.add_argument("--ocr", required=True, help="reader checkpoint for the loss")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subset", default="union", help="interval tag or 'union'")
    p.add_argument("--config", help="JSON file with model/train overrides")
    p.add_argument("--attention", choices=ATTENTION_CHOICES)
    p.add_argument("--channels", type=int)
    p.add_argument("--num-rcb", type=int)
    p.add_argument("--units-per-rcb", type=int)
    p.add_argument("--recon-blocks", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--auto-alpha", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write a report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ocr", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--no-layout-mask", action="store_true")
    p.add_argument("--k-strips", type=int, default=6)
    p.add_argument("--strip-seed", type=int, default=0)
    p.add_argument("--no-save-sr", action="store_true", help="skip writing restored PNGs")

    p = sub.add_parser("infer", help="restore one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="input PNG (any size; padded and resized)")
    p.add_argument("--output", required=True, help="output PNG path")

    p = sub.add_parser("report", help="re-render tables and strips from a saved eval")
    p.add_argument("--eval", dest="eval_json", required=True, help="eval.json from eval")
    p.add_argument("--data", required=True, help="dataset directory (for strip pixels)")
    p.add_argument("--out", required=True)
    p.add_argument("--k-strips", type=int, default=6)
    p.add_argument("--strip-seed", type=int, default=0)

    p = sub.add_parser("run-exp", help="run a full experiment from a JSON spec")
    p.add_argument("--spec", required=True)

    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    samples = sample_corpus(args.n, args.mix, args.seed)
    manifest = write_corpus(samples, args.out)
    print(f"wrote {len(samples)} plates to {args.out} ({manifest.name})")
    return 0


def _cmd_degrade(args: argparse.Namespace) -> int:
    corpus = read_corpus(args.corpus)
    intervals = parse_intervals(args.intervals)
    manifest = build_subsets(
        corpus,
        intervals,
        split=args.split,
        seed=args.seed,
        out_dir=args.out,
        max_iter=args.max_iter,
        sigma_lo=args.sigma_lo,
        sigma_hi=args.sigma_hi,
        blur_sigma=args.blur,
    )
    n_ok = sum(1 for r in manifest.records if r.status == "ok")
    n_failed = len(manifest.failures())
    print(f"wrote {n_ok} pairs ({n_failed} failed) across {len(intervals)} intervals to {args.out}")
    return 0 if n_failed == 0 else 2


def _cmd_train_ocr(args: argparse.Namespace) -> int:
    samples = read_corpus(args.corpus)
    model = toy_ocr_build(seed=args.seed, width=args.width)
    log = toy_ocr_train(
        model,
        samples,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        lr=args.lr,
        noise_sigma=args.noise_sigma,
    )
    save_toy_ocr(model, args.out)
    final = log[-1].accuracy if log else float("nan")
    print(f"trained reader for {args.epochs} epochs, accuracy {final:.4f}, saved to {args.out}")
    return 0


def _load_train_overrides(args: argparse.Namespace) -> tuple[ModelConfig, TrainConfig]:
    model_raw: dict = {}
    train_raw: dict = {}
    if args.config:
        with open(args.config, "r", encoding="ascii") as fh:
            payload = json.load(fh)
        model_raw = dict(payload.get("model", {}))
        train_raw = dict(payload.get("train", {}))
    flag_map = {
        "attention": args.attention,
        "channels": args.channels,
        "num_rcb": args.num_rcb,
        "units_per_rcb": args.units_per_rcb,
        "recon_blocks": args.recon_blocks,
    }
    for key, value in flag_map.items():
        if value is not None:
            model_raw[key] = value
    loss_raw = dict(train_raw.pop("loss", {}))
    if args.alpha is not None:
        loss_raw["alpha"] = args.alpha
    if args.auto_alpha:
        loss_raw["auto_alpha"] = True
    if args.max_epochs is not None:
        train_raw["max_epochs"] = args.max_epochs
    if args.batch_size is not None:
        train_raw["batch_size"] = args.batch_size
    train_raw["seed"] = args.seed
    model_fields = {f.name for f in fields(ModelConfig)}
    train_fields = {f.name for f in fields(TrainConfig)} - {"loss"}
    bad = (set(model_raw) - model_fields) | (set(train_raw) - train_fields)
    if bad:
        raise PlateSrError(f"unknown config keys: {sorted(bad)}")
    return (
        ModelConfig(**model_raw),
        TrainConfig(loss=LossConfig(**loss_raw), **train_raw),
    )


def _cmd_train_sr(args: argparse.Namespace) -> int:
    model_cfg, train_cfg = _load_train_overrides(args)
    manifest = read_manifest(args.data)
    from .degrade import load_pairs

    train_pairs = load_pairs(manifest, args.data, args.subset, "train")
    val_pairs = load_pairs(manifest, args.data, args.subset, "val")
    ocr = load_toy_ocr(args.ocr)
    network = build_network(model_cfg, seed=args.seed)
    _, log = train(network, train_pairs, val_pairs, ocr, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(network, out / "network.npz")
    write_log_csv(log, out / "train_log.csv")
    print(
        f"trained {len(log.epochs)} epochs ({log.stop_reason}), best val loss "
        f"{log.best_val_loss:.6g} at epoch {log.best_epoch}; saved to {out / 'network.npz'}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    network = load_network(args.checkpoint)
    manifest = read_manifest(args.data)
    ocr = load_toy_ocr(args.ocr)
    split = None if args.split == "all" else args.split
    eval_report = evaluate(
        network,
        manifest,
        args.data,
        ocr,
        split=split,
        use_layout_mask=not args.no_layout_mask,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.no_save_sr:
        for s in eval_report.samples:
            rel = Path("sr") / s.interval_tag / f"{s.index:05d}_{s.label}.png"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            save_png(s.sr_image, out / rel)
            s.sr_path = str(rel)
    save_report_json(eval_report, out / "eval.json")
    report(
        eval_report,
        out,
        k_strips=args.k_strips,
        strip_seed=args.strip_seed,
        data_dir=args.data,
    )
    union_sr = [r for r in eval_report.rows if r.section == "sr" and r.subset == "union"
                and r.layout == "all"]
    if union_sr:
        row = union_sr[0]
        print(
            f"evaluated {len(eval_report.samples)} samples; union all-7 "
            f"{row.pct_all7:.1f}%, mean SSIM {row.mean_ssim:.4f}"
        )
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    network = load_network(args.checkpoint)
    img = pad_and_resize(load_png(args.input))
    from .network import forward as net_forward

    out = net_forward(network, img)
    save_png(out.sr, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    eval_report = load_report_json(args.eval_json)
    eval_root = Path(args.eval_json).parent
    for s in eval_report.samples:
        if s.sr_path and (eval_root / s.sr_path).is_file():
            s.sr_image = load_png(eval_root / s.sr_path)
    files = report(
        eval_report,
        args.out,
        k_strips=args.k_strips,
        strip_seed=args.strip_seed,
        data_dir=args.data,
    )
    print(f"wrote {len(files)} report files to {args.out}")
    return 0


def _cmd_run_exp(args: argparse.Namespace) -> int:
    spec = ExperimentSpec.load(args.spec)
    ckpt, log, eval_report = run_experiment(spec)
    print(
        f"experiment {spec.name}: {len(log.epochs)} epochs, best val loss "
        f"{log.best_val_loss:.6g}; checkpoint {ckpt}; "
        f"{len(eval_report.samples)} samples evaluated"
    )
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "degrade": _cmd_degrade,
    "train-ocr": _cmd_train_ocr,
    "train-sr": _cmd_train_sr,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "report": _cmd_report,
    "run-exp": _cmd_run_exp,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except PlateSrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
