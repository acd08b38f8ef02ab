"""Command line entry point: ``fpplab <kind> --config cfg.ini [--seed S] [--threads N] [--out DIR]``.

Exit codes: 0 success, 1 compute failure, 2 configuration error.
"""

import argparse
import configparser
import io
import logging
import os
import sys
from pathlib import Path

from ._parallel import THREADS_ENV
from .experiment import ConfigError, ExperimentConfig, ExperimentKind, StageError, emit_plot_data, run

log = logging.getLogger("fpplab")

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="fpplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        p = sub.add_parser(kind.value, help=f"run a {kind.name.lower()} experiment")
        p.add_argument("--config", type=Path, help="INI config; defaults are used for missing keys")
        p.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores; overrides env and config)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p = sub.add_parser("plotdata", help="convert artifact CSVs to long-format plot data")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return parser


def load_config(kind, path):
    if path is None:
        return ExperimentConfig(ExperimentKind(kind))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "[experiment]" not in text:
        text = "[experiment]\n" + text
    return ExperimentConfig.from_ini(_with_kind(text, kind))


def _with_kind(text, kind):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    have = cp.get("experiment", "kind", fallback=kind)
    if have.strip().lower() != kind:
        raise ConfigError(f"config is for '{have}' but the '{kind}' subcommand was used")
    cp["experiment"]["kind"] = kind
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            n = emit_plot_data(args.inputs, args.out)
            log.info("wrote %d rows to %s", n, args.out)
            return EXIT_OK
        cfg = load_config(args.command, args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(args.out)
        cfg.validate()
        manifest = run(cfg, threads=args.threads if args.threads is not None else _env_or(cfg.threads))
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (StageError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_COMPUTE
    log.info("%s: %d artifacts in %s (%.1fs)", args.command, len(manifest.files), cfg.out, manifest.wall_time)
    return EXIT_OK


def _env_or(config_threads):
    env = os.environ.get(THREADS_ENV)
    if not env:
        return config_threads
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc


if __name__ == "__main__":
    sys.exit(main())
