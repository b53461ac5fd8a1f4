"""Command line: train on a dataset directory, infer on a frame pair."""

from __future__ import annotations

import argparse
import json
import sys

from .config import LossSpec, NetworkSpec, TrainingSchedule, Variant
from .inference import infer
from .training import train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strainnet-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a flow network on a generated dataset")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="f")
    p.add_argument("--channels", type=int, nargs="+", default=None,
                   help="encoder widths per down-sampling stage")
    p.add_argument("--decoder-channels", type=int, nargs="+", default=None)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--halve-every", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-pairs", type=int, default=None)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--loss-weights", type=float, nargs="+", default=None,
                   help="per-level weights, coarsest first")

    q = sub.add_parser("infer", help="run a checkpoint on one frame pair")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--ref", required=True)
    q.add_argument("--def", dest="deformed", required=True)
    q.add_argument("--out", required=True, help="output flow file")
    q.add_argument("--variant", choices=[v.value for v in Variant], default=None,
                   help="assert the checkpoint's variant")

    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            kwargs = {}
            if args.channels is not None:
                kwargs["channels"] = tuple(args.channels)
            if args.decoder_channels is not None:
                kwargs["decoder_channels"] = tuple(args.decoder_channels)
            spec = NetworkSpec(variant=Variant(args.variant), **kwargs)
            schedule = TrainingSchedule(
                batch_size=args.batch_size,
                initial_lr=args.lr,
                halve_every=args.halve_every,
                epochs=args.epochs,
            )
            loss_spec = (
                LossSpec(weights=tuple(args.loss_weights))
                if args.loss_weights is not None
                else None
            )
            result = train(
                spec,
                args.dataset,
                args.out,
                schedule=schedule,
                seed=args.seed,
                loss_spec=loss_spec,
                max_pairs=args.max_pairs,
                workers=args.workers,
            )
            print(
                json.dumps(
                    {
                        "command": "train",
                        "checkpoint": str(result.checkpoint),
                        "log": str(result.log),
                        "final_train_loss": result.train_losses[-1],
                        "final_val_aee": result.val_aee[-1],
                    },
                    sort_keys=True,
                )
            )
        else:
            variant = Variant(args.variant) if args.variant else None
            infer(args.checkpoint, args.ref, args.deformed, args.out, variant=variant)
            print(json.dumps({"command": "infer", "out": str(args.out)}, sort_keys=True))
    except Exception as exc:
        print(
            json.dumps(
                {"command": args.command, "error": {"type": type(exc).__name__, "message": str(exc)}},
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return 1
    return 0


def main() -> None:
    sys.exit(run())
