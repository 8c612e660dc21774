"""Command line entry point.

    silbath run <config.json>       run an experiment (or sweep)
    silbath oracle <config.json>    tabulate a closed-form oracle
    silbath validate <config.json>  check a config without computing

Exit status: 0 on success, 1 for invalid input or failed numerics,
2 when a basis would exceed the dimension cap. Worker processes for sweeps
are set with the SILBATH_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config, locate
from .errors import DomainError, NumericalError, ResourceError
from .fock import vacuum_dimension
from .runner import oracle_table, run_experiment

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_RESOURCE = 2

logger = logging.getLogger("silbath")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="silbath", description="Qubit-bath dynamics by short-iterative Lanczos.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run an experiment config"),
                       ("oracle", "tabulate a closed-form oracle config"),
                       ("validate", "validate a config and report its size")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="path to a JSON config")
    return parser


def _diagnose(path: str, exc: ConfigError, text: str | None) -> str:
    line = exc.line
    if line is None and text is not None and exc.path:
        line = locate(text, exc.path)
    where = f"{path}:{line}" if line else path
    field = ".".join(str(k) for k in exc.path)
    return f"{where}: error: {exc}" + (f" [{field}]" if field else "")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    text = None
    try:
        cfg, text = load_config(args.config)
        if args.command == "validate":
            points = cfg.points() if cfg.kind != "oracle-table" else []
            dims = [vacuum_dimension(p.spec.n_modes, p.spec.n_ph) for p in points]
            msg = f"ok: {cfg.kind}"
            if points:
                msg += f", {len(points)} sweep point(s), largest vacuum basis {max(dims)}"
            print(msg)
            return EXIT_OK
        if args.command == "oracle":
            if cfg.kind != "oracle-table":
                raise ConfigError("the oracle command needs kind = oracle-table", ("kind",))
            result = oracle_table(cfg)
            print(f"wrote {result['path']} ({result['rows']} rows)")
            return EXIT_OK
        summary = run_experiment(cfg)
        if cfg.kind == "oracle-table":
            print(f"wrote {summary['path']} ({summary['rows']} rows)")
        else:
            print(f"wrote {len(summary['points'])} point(s) to {cfg.output}")
        return EXIT_OK
    except ConfigError as exc:
        print(_diagnose(args.config, exc, text), file=sys.stderr)
        return EXIT_DOMAIN
    except ResourceError as exc:
        print(f"{args.config}: resource error: {exc} (required dimension {exc.dimension})", file=sys.stderr)
        return EXIT_RESOURCE
    except (DomainError, NumericalError) as exc:
        print(f"{args.config}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
