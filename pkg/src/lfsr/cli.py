"""Single entry point with subcommands for the whole pipeline.

Exit codes: 0 success, 2 usage/config error, 3 runtime numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ArgumentError, ConfigError, FormatError, LfsrError, NumericError

USAGE_EXIT = 2
NUMERIC_EXIT = 3


def _add_synth(sub):
    p = sub.add_parser("synth-data", help="synthesize the toy WAV corpus + manifest")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--items", type=int, default=24)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--duration", type=float, default=3.0, help="seconds per item")


def _add_train(sub, name: str, help_text: str):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--out", required=True, help="output directory for checkpoints/logs")
    p.add_argument("--manifest", required=True, help="corpus manifest (manifest.jsonl)")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")
    if name == "train-cfm":
        p.add_argument("--ae-checkpoint", required=True, help="frozen autoencoder checkpoint")


def _add_infer(sub):
    p = sub.add_parser("infer", help="super-resolve one WAV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ae", required=True, help="autoencoder checkpoint")
    p.add_argument("--vnet", required=True, help="velocity-net checkpoint")
    p.add_argument("--source-rate", type=int, default=0, help="band limit of the input (default: its sample rate)")
    p.add_argument("--steps", type=int, default=1, help="Euler steps (N)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--encoding", choices=("pcm16", "float32"), default="pcm16")


def _add_eval(sub):
    p = sub.add_parser("eval", help="LSD / LSD-HF report over paired directories")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--source-rate", type=int, required=True)
    p.add_argument("--report", default=None, help="JSONL report path (default: <est>/eval-report.jsonl)")
    p.add_argument("--workers", type=int, default=0, help="parallel files (default: LFSR_WORKERS or 1)")
    p.add_argument("--visqol-cmd", default=None, help="external scorer, '{ref}'/'{est}' placeholders")


def _add_stats(sub):
    p = sub.add_parser("stats", help="inference steps / parameters / FLOPs accounting")
    p.add_argument("--ae", required=True)
    p.add_argument("--vnet", required=True)
    p.add_argument("--rate", type=int, default=0, help="target rate (default: from checkpoint)")
    p.add_argument("--steps", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub, "train-ae", "stage 1: adversarial autoencoder training")
    _add_train(sub, "train-cfm", "stage 2: flow matching on frozen-AE latents")
    _add_infer(sub)
    _add_eval(sub)
    _add_stats(sub)
    return parser


def _cmd_synth(args) -> int:
    from . import dataset

    if args.items < 1:
        raise ArgumentError(f"--items must be >= 1, got {args.items}")
    manifest = dataset.synth_toy_corpus(args.out, args.seed, args.items, args.duration, args.rate)
    path = Path(args.out) / "manifest.jsonl"
    snapshot = {
        "seed": args.seed,
        "items": args.items,
        "rate": args.rate,
        "duration_s": args.duration,
    }
    (Path(args.out) / "synth-args.json").write_text(json.dumps(snapshot, indent=1))
    print(f"wrote {len(manifest.entries)} items; manifest at {path}")
    return 0


def _cmd_train(args, stage: str) -> int:
    from . import config as cfg_mod
    from . import dataset, trainer

    run_cfg = cfg_mod.load_config(args.config)
    manifest = dataset.read_manifest(args.manifest)
    cfg_mod.write_snapshot(run_cfg, args.out)
    if stage == "ae":
        ckpt = trainer.train_ae(manifest, run_cfg, args.out, resume=args.resume)
    else:
        ckpt = trainer.train_cfm(
            manifest, args.ae_checkpoint, run_cfg, args.out, resume=args.resume
        )
    print(f"final checkpoint: {ckpt}")
    return 0


def _cmd_infer(args) -> int:
    from . import cfm
    from . import signal as sig
    from . import trainer

    if args.steps < 1:
        raise ArgumentError(f"--steps must be >= 1, got {args.steps}")
    ae_model, ae_conf = trainer.load_autoencoder(args.ae)
    net, net_conf = trainer.load_velocity_net(args.vnet)
    if net_conf["ae"] != ae_conf["ae"]:
        raise ConfigError("velocity-net checkpoint was trained against a different autoencoder config")
    target_rate = int(ae_conf["target_rate"])

    clip = sig.load_wav(args.input)
    source_rate = args.source_rate or clip.rate
    out = cfm.super_resolve(
        clip,
        ae_model,
        net,
        target_rate=target_rate,
        source_rate=source_rate,
        steps=args.steps,
        seed=args.seed,
    )
    sig.save_wav(out, args.output, encoding=args.encoding)
    sidecar = {
        "input": str(args.input),
        "source_rate": source_rate,
        "target_rate": target_rate,
        "steps": args.steps,
        "seed": args.seed,
        "ae": str(args.ae),
        "vnet": str(args.vnet),
    }
    Path(str(args.output) + ".run.json").write_text(json.dumps(sidecar, indent=1))
    print(f"wrote {args.output} at {target_rate} Hz ({len(out)} samples)")
    return 0


def _cmd_eval(args) -> int:
    from . import metrics
    from .config import EvalConfig

    workers = args.workers or EvalConfig().resolve_workers()
    report = metrics.eval_dir(
        args.ref,
        args.est,
        args.source_rate,
        workers=workers,
        visqol_cmd=args.visqol_cmd,
    )
    print(report.to_table())
    out = Path(args.report) if args.report else Path(args.est) / "eval-report.jsonl"
    report.write_jsonl(out)
    if report.unpaired:
        print(f"warning: {len(report.unpaired)} unpaired file(s) excluded", file=sys.stderr)
    return 0


def _cmd_stats(args) -> int:
    from . import metrics, trainer
    from .autoencoder import AutoencoderConfig
    from .velocity_net import VelocityNetConfig

    if args.steps < 1:
        raise ArgumentError(f"--steps must be >= 1, got {args.steps}")
    _, ae_conf = trainer.load_autoencoder(args.ae)
    _, net_conf = trainer.load_velocity_net(args.vnet)
    rate = args.rate or int(ae_conf["target_rate"])
    report = metrics.complexity_report(
        AutoencoderConfig(**ae_conf["ae"]),
        VelocityNetConfig(**net_conf["vnet"]),
        rate,
        args.steps,
    )
    print(metrics.format_complexity_table(report))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "synth-data": _cmd_synth,
        "train-ae": lambda a: _cmd_train(a, "ae"),
        "train-cfm": lambda a: _cmd_train(a, "cfm"),
        "infer": _cmd_infer,
        "eval": _cmd_eval,
        "stats": _cmd_stats,
    }
    try:
        return handlers[args.command](args)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return NUMERIC_EXIT
    except (ArgumentError, ConfigError, FormatError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except LfsrError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
