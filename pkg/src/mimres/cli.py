"""Command-line entry point.

Verbs: synth-data, train-rffr, train-detector, eval, visualize, ablate.
Global flags: --config, --seed, --out, --overwrite.

Exit codes: 0 success, 2 config error, 3 missing prerequisite, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import ExperimentConfig, load_config
from .errors import ConfigError, InputError, MissingPrerequisiteError, NumericFailureError
from .workflows import (AblationStudy, cmd_ablate, cmd_eval, cmd_synth_data,
                        cmd_train_detector, cmd_train_rffr, cmd_visualize)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimres",
        description="Inpainting-residual deepfake detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--overwrite", action="store_true",
                       help="replace existing outputs instead of refusing")

    add_common(sub.add_parser("synth-data", help="generate synthetic per-domain datasets"))
    add_common(sub.add_parser("train-rffr", help="train the real-image representation model"))
    p = sub.add_parser("train-detector", help="train one classifier per train domain")
    add_common(p)
    p.add_argument("--no-curves", action="store_true",
                   help="skip periodic test-set evaluation during training")
    add_common(sub.add_parser("eval", help="compute the cross-domain AUC matrix"))
    add_common(sub.add_parser("visualize", help="export original/reconstructed/residual grids"))
    p = sub.add_parser("ablate", help="run a comparative study")
    add_common(p)
    p.add_argument("--study", required=True, choices=[s.value for s in AblationStudy])
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config, overrides={"seed": args.seed, "out_dir": args.out})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "synth-data":
            target = cmd_synth_data(cfg, overwrite=args.overwrite)
        elif args.command == "train-rffr":
            target = cmd_train_rffr(cfg, overwrite=args.overwrite)
        elif args.command == "train-detector":
            target = cmd_train_detector(cfg, overwrite=args.overwrite, curves=not args.no_curves)
        elif args.command == "eval":
            target = cmd_eval(cfg, overwrite=args.overwrite)
        elif args.command == "visualize":
            target = cmd_visualize(cfg, overwrite=args.overwrite)
        elif args.command == "ablate":
            target = cmd_ablate(cfg, AblationStudy(args.study), overwrite=args.overwrite)
        else:  # pragma: no cover - argparse rejects unknown commands
            raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingPrerequisiteError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericFailureError as exc:
        print(f"numeric failure: {exc} (step {exc.step})", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return 1
    print(f"{args.command}: outputs written to {target}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
