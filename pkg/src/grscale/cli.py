"""``grscale`` command line: one subcommand per pipeline step, all sharing a run directory.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys

from . import pipeline
from .autodiff import CheckpointError, NonFiniteGradient
from .corpus import CorpusError
from .decode import DecodeError
from .embed import EmbeddingError
from .models import ModelError, TrainingDivergence
from .scaling import ScalingError
from .tokenizer import RQVAEDivergence, TokenizerError
from .trie import TrieError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("grscale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grscale", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with per-command sections")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (1 guarantees determinism)")
    common.add_argument("--out", default="runs/default", help="run directory for inputs and outputs")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. train.epochs=5 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in pipeline.STEPS:
        p = sub.add_parser(name, parents=[common])
        if name == "report":
            p.add_argument("runs", nargs="*", help="run directories holding report.json")
    return parser


@contextlib.contextmanager
def _thread_limit(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # optional; without it BLAS uses its own default
        yield
        return
    with threadpool_limits(limits=n):
        yield


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = 1 if args.deterministic else max(1, args.threads)
    try:
        cfg = pipeline.load_config(args.config, args.overrides, args.seed)
        run = pipeline.Run(args.out, cfg, args.command)
        with _thread_limit(threads):
            if args.command == "report":
                result = pipeline.run_report(run, args.runs or None)
            else:
                result = pipeline.STEPS[args.command](run)
        log.info("%s done: %s", args.command, type(result).__name__)
        return EXIT_OK
    except (pipeline.ConfigError, ModelError, ScalingError) as exc:
        code = EXIT_CONFIG
        if isinstance(exc, ScalingError) and "must lie in" in str(exc):
            code = EXIT_DATA
        print(f"grscale {args.command}: {'config' if code == EXIT_CONFIG else 'data'} error: {exc}", file=sys.stderr)
        return code
    except (FileNotFoundError, CorpusError, EmbeddingError, TokenizerError, TrieError, CheckpointError) as exc:
        print(f"grscale {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergence, RQVAEDivergence, NonFiniteGradient, DecodeError, FloatingPointError) as exc:
        print(f"grscale {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
