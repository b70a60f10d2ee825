"""Command-line interface.

Subcommands: synth, rank-outer, train-gan, sample, augment-eval,
pipeline, report. Global flags (valid after any subcommand):
--config <path>, --seed <u64>, --out <dir>, --quiet.

Exit codes: 0 success, 2 I/O or file-format problems, 3 configuration or
argument problems, 4 training divergence, 5 rejection-sampling starvation.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import default_config, load_config
from .errors import (
    ConfigError,
    DataFormatError,
    DivergenceError,
    StarvationError,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_IO,
    EXIT_OK,
    EXIT_STARVATION,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; the contract says 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config file (defaults built in)")
    parser.add_argument("--seed", type=int, help="override the base seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> _Parser:
    parser = _Parser(prog="domainfusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write target + candidate DFDS files")
    _common_flags(p)

    p = sub.add_parser("rank-outer", help="rank candidate outer datasets")
    _common_flags(p)
    p.add_argument("--target", required=True, help="target DFDS path")
    p.add_argument("--candidates", required=True,
                   help="comma-separated candidate DFDS paths")
    p.add_argument("--extractor", help="persisted extractor (else trained on the fly)")

    p = sub.add_parser("train-gan", help="train a GAN in the configured mode")
    _common_flags(p)
    p.add_argument("--target", required=True, help="target DFDS path")
    p.add_argument("--outer", help="outer DFDS path (df/tgan modes)")
    p.add_argument("--mode", choices=("cgan", "tgan", "df"),
                   help="override [gan] mode from the config")
    p.add_argument("--extractor", help="extractor for IS-based early stopping")

    p = sub.add_parser("sample", help="sample images from a checkpoint")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True, help="DFCK checkpoint path")
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--use-drs", action="store_true",
                   help="filter with discriminator rejection sampling")
    p.add_argument("--target", help="real target DFDS (fits the DRS head)")
    p.add_argument("--head", help="previously saved DRS head/state JSON")

    p = sub.add_parser("augment-eval", help="train/evaluate an augmented classifier")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True, help="real training DFDS")
    p.add_argument("--val", required=True, help="validation DFDS")
    p.add_argument("--test", required=True, help="test DFDS")
    p.add_argument("--mode-label", default="gan", help="mode tag for report rows")

    p = sub.add_parser("pipeline", help="run the full comparison pipeline")
    _common_flags(p)

    p = sub.add_parser("report", help="print the summary table of a run")
    _common_flags(p)

    return parser


def _resolve(args) -> tuple[dict, str, int | None]:
    cfg = load_config(args.config) if args.config else default_config()
    out_dir = args.out if args.out else cfg["paths"]["out_dir"]
    return cfg, out_dir, args.seed


def _dispatch(args) -> int:
    cfg, out_dir, seed = _resolve(args)
    quiet = args.quiet
    if args.command == "synth":
        pipeline.cmd_synth(cfg, out_dir, seed=seed, quiet=quiet)
        return EXIT_OK
    if args.command == "rank-outer":
        candidates = [p for p in args.candidates.split(",") if p]
        if not candidates:
            raise ConfigError("--candidates is empty")
        _, chosen = pipeline.cmd_rank_outer(
            args.target, candidates, cfg, out_dir=out_dir,
            extractor_path=args.extractor, seed=seed, quiet=quiet,
        )
        print(chosen)
        return EXIT_OK
    if args.command == "train-gan":
        pipeline.cmd_train_gan(
            cfg, args.target, out_dir, outer_path=args.outer,
            mode=args.mode, seed=seed, extractor_path=args.extractor, quiet=quiet,
        )
        return EXIT_OK
    if args.command == "sample":
        pipeline.cmd_sample(
            cfg, args.checkpoint, args.n_per_class, out_dir,
            use_drs=args.use_drs, target_path=args.target,
            head_path=args.head, seed=seed, quiet=quiet,
        )
        return EXIT_OK
    if args.command == "augment-eval":
        pipeline.cmd_augment_eval(
            cfg, args.checkpoint, args.train, args.val, args.test,
            out_dir, mode_label=args.mode_label, seed=seed, quiet=quiet,
        )
        return EXIT_OK
    if args.command == "pipeline":
        pipeline.run_pipeline(cfg, out_dir, base_seed=seed, quiet=quiet)
        return EXIT_OK
    if args.command == "report":
        pipeline.cmd_report(out_dir, quiet=False)
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"domainfusion: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        where = f" at iteration {exc.iteration}" if exc.iteration is not None else ""
        print(f"domainfusion: training diverged{where}: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except StarvationError as exc:
        print(
            f"domainfusion: sampling starved (class {exc.class_id}, "
            f"rate {exc.rate:.4f} over {exc.attempts} attempts): {exc}",
            file=sys.stderr,
        )
        return EXIT_STARVATION
    except DataFormatError as exc:
        print(f"domainfusion: bad file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"domainfusion: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
