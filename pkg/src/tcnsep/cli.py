"""Command-line interface.

Subcommands:
    synth      build a synthetic corpus, mixture manifest, and rendered audio
    train      train a separator on a manifest
    evaluate   score a checkpoint (or a reference system) on a split
    rf         print the receptive-field table for a config
    params     print parameter counts for every separator variant

Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .blocks import receptive_field
from .manifest import Manifest, build_manifest, make_synthetic_corpus, render_manifest
from .model import SeparationModel
from .separators import VARIANTS, count_parameters
from .train import RunConfig, train
from . import evaluate as evaluate_mod

log = logging.getLogger(__name__)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run config; CLI flags override it")
    p.add_argument("--variant", choices=VARIANTS, help="separator variant")
    p.add_argument("--seed", type=int, help="master random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcnsep", description="time-domain speech separation toolkit"
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="build a synthetic corpus and mixture manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-speakers", type=int, default=6)
    p.add_argument("--utts-per-speaker", type=int, default=4)
    p.add_argument("--pairs", type=int, default=20, help="mixtures to list in the manifest")
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=5.0)
    p.add_argument("--dur", type=float, default=2.0, help="utterance length in seconds")
    p.add_argument("--no-render", action="store_true", help="skip writing mixture audio")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a separator")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory for checkpoints and logs")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--segment-seconds", type=float, dest="segment_seconds")
    p.add_argument("--checkpoint-interval", type=int, dest="checkpoint_interval")
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--early-stop-gain-db", type=float, dest="early_stop_gain_db")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a system on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for report.json/report.csv")
    p.add_argument("--ckpt", help="checkpoint to evaluate (system 'model')")
    p.add_argument("--system", choices=evaluate_mod.SYSTEMS, default="model")
    p.add_argument("--split", default="test")
    p.add_argument("--segment-seconds", type=float, dest="segment_seconds")
    p.add_argument("--sample-rate", type=int, dest="sample_rate", default=8000)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rf", help="print receptive fields for a config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_rf)

    p = sub.add_parser("params", help="print parameter counts per variant")
    _add_config_flags(p)
    p.set_defaults(func=cmd_params)
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional TOML config with CLI overrides."""
    doc: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
    if getattr(args, "variant", None):
        doc.setdefault("separator", {})["variant"] = args.variant
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    for name in (
        "max_steps",
        "batch_size",
        "segment_seconds",
        "checkpoint_interval",
        "eval_interval",
        "early_stop_gain_db",
    ):
        value = getattr(args, name, None)
        if value is not None:
            doc[name] = value
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:  # unknown keys in the TOML document
        raise ValueError(f"bad run config: {exc}") from exc


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    corpus = out / "corpus"
    make_synthetic_corpus(
        corpus,
        num_speakers=args.num_speakers,
        utts_per_speaker=args.utts_per_speaker,
        dur_s=args.dur,
        seed=args.seed,
    )
    manifest = build_manifest(
        corpus, pair_count=args.pairs, snr_range=(args.snr_min, args.snr_max), seed=args.seed
    )
    manifest_path = out / "manifest.jsonl"
    manifest.save(manifest_path)
    print(f"corpus: {corpus} ({args.num_speakers} speakers x {args.utts_per_speaker} utts)")
    print(f"manifest: {manifest_path} ({len(manifest.entries)} mixtures)")
    if not args.no_render:
        written = render_manifest(manifest, out / "audio")
        print(f"audio: {out / 'audio'} ({len(written)} mixtures rendered)")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    manifest = Manifest.load(args.manifest)
    result = train(cfg, manifest, args.out)
    last_loss = result.losses[-1][1]
    print(f"trained {result.steps} steps; final loss {last_loss:.3f} (uSDR {-last_loss:.2f} dB)")
    print(f"mixture baseline si_sdr: {result.baseline_sdr:.2f} dB")
    if result.final_train_usdr is not None:
        gain = result.final_train_usdr - result.baseline_sdr
        tag = " (early stop)" if result.stopped_early else ""
        print(f"train-set uSDR: {result.final_train_usdr:.2f} dB ({gain:+.2f} dB over baseline){tag}")
    print(f"final checkpoint: {result.final_checkpoint}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = Manifest.load(args.manifest)
    if args.system == "model":
        if not args.ckpt:
            raise ValueError("system 'model' needs --ckpt")
        report = evaluate_mod.evaluate_checkpoint(
            args.ckpt, manifest, split=args.split, segment_seconds=args.segment_seconds
        )
    else:
        report = evaluate_mod.evaluate(
            manifest,
            split=args.split,
            system=args.system,
            segment_seconds=args.segment_seconds or 4.0,
            sample_rate_hz=args.sample_rate,
        )
    json_path, csv_path = evaluate_mod.write_report(report, args.out)
    print(f"system: {report.system}, split: {args.split}, {len(report.per_utterance)} utterances")
    print(f"mean si_sdr: {report.mean_sdr:.2f} dB")
    print(f"mean SDRi:   {report.mean_sdri:.2f} dB (baseline {report.baseline:.2f} dB)")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def cmd_rf(args: argparse.Namespace) -> int:
    cfg = load_run_config(args).separator
    k = cfg.tcn.block.kernel_size
    dil = cfg.tcn.dilations
    per_stack = receptive_field(dil, k)
    print(f"kernel {k}, dilations {list(dil)}: one stack spans {per_stack} frames")
    for stacks in range(1, cfg.num_tcns + 1):
        total = receptive_field(dil * stacks, k)
        print(f"  {stacks} stack{'s' if stacks > 1 else ' '}: {total} frames")
    if cfg.variant == "py":
        for depth in cfg.py_branch_depths:
            total = receptive_field(dil * depth, k)
            print(f"  pyramid branch of {depth} stacks: {total} frames")
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    base = load_run_config(args)
    print(f"{'variant':<8} {'separator':>12} {'full model':>12}")
    for variant in VARIANTS:
        try:
            sep_cfg = replace(base.separator, variant=variant)
            model = SeparationModel(base.frontend, sep_cfg)
        except ValueError as exc:
            print(f"{variant:<8} unavailable: {exc}")
            continue
        sep_count = count_parameters(model.separator)
        total = sum(p.numel() for p in model.parameters())
        print(f"{variant:<8} {sep_count:>12,} {total:>12,}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 2 if code not in (0, None) else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "command", None) is None or not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, NotADirectoryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.exception("command failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
