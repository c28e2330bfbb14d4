"""Command-line entry point: ``mpirtik {gen,run,filters,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import ConfigError, generate_problem, parse_config, report, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3

log = logging.getLogger("mpirtik")


def _load_config(args):
    text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_gen(args):
    cfg = _load_config(args)
    out = generate_problem(cfg, args.out or cfg.directory or "problem")
    print(out)
    return EXIT_OK


def _run(args, cfg):
    res = run_experiment(cfg, args.out, parallel=args.parallel)
    for f in res.files:
        print(f)
    for cell in res.diverged:
        log.warning("diverged: %s", cell.stem)
    if args.strict and res.any_diverged:
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_run(args):
    return _run(args, _load_config(args))


def _cmd_filters(args):
    cfg = _load_config(args)
    if cfg.method not in ("pl", "ir", "mpir"):
        raise ConfigError([f"solver.method: filter pipeline needs pl, ir or mpir, got {cfg.method!r}"])
    return _run(args, cfg.with_outputs({"filters", "table2"}))


def _cmd_report(args):
    print(report(args.out), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpirtik", description="Mixed precision Tikhonov experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, metavar="PATH")
            p.add_argument("--seed", type=int, default=None, metavar="N", help="override noise.seed")
        p.add_argument("--out", metavar="DIR", default=None, required=not needs_config)
        return p

    common(sub.add_parser("gen", help="write the problem directory")).set_defaults(func=_cmd_gen)
    for name, func, text in (("run", _cmd_run, "run the configured grid"),
                             ("filters", _cmd_filters, "filter-factor outputs only")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--parallel", action="store_true", help="run grid cells in a process pool")
        p.add_argument("--strict", action="store_true", help="exit with status 2 if any run diverged")
        p.set_defaults(func=func)
    common(sub.add_parser("report", help="pivot table2/table3 CSVs"), needs_config=False).set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
