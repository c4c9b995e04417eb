"""Command line entry point.

    cfmimo validate --config cfg.json --out results/validate.csv --trials 100000
    cfmimo sweep tauc --grid 10,50,100 --out results/tauc.csv
    cfmimo optimize --grid 0,10,20 --param n_opt='["anchor", 30, "per_instant"]'
    cfmimo terms --grid 5,20,50 --out results/terms.csv

Errors are reported as one JSON object on stderr and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..config import ConfigError, SystemConfig, load_config
from .experiments import ExperimentSpec, run_experiment
from .output import write_results

log = logging.getLogger("cfmimo")

SWEEPS = {"instant": "sweep_instant", "tauc": "sweep_tauc", "taup": "sweep_taup",
          "aps": "sweep_aps", "antennas": "sweep_antennas", "power": "sweep_power"}

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _grid_item(s: str):
    s = s.strip()
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def parse_grid(text: str | None) -> list:
    if text is None:
        return []
    items = [x for x in text.split(",") if x.strip()]
    if not items:
        raise ConfigError("grid must be nonempty", "grid")
    return [_grid_item(x) for x in items]


def parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {pair!r}", "params")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON system configuration (defaults if omitted)")
    common.add_argument("--out", help="output CSV (or .json); stdout if omitted")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=10_000, help="Monte Carlo trials")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--grid", help="comma separated grid values")
    common.add_argument("--param", action="append", metavar="KEY=JSON",
                        help="experiment parameter, repeatable")
    common.add_argument("--no-mirror", action="store_true", help="skip the JSON/CSV mirror")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cfmimo", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("validate", parents=[common], help="closed form vs Monte Carlo")
    sw = sub.add_parser("sweep", parents=[common], help="closed-form SE sweeps")
    sw.add_argument("axis", choices=sorted(SWEEPS))
    sub.add_parser("optimize", parents=[common], help="power control comparison")
    sub.add_parser("terms", parents=[common], help="per-term SINR power breakdown")
    return p


def _kind(args) -> str:
    if args.verb == "sweep":
        return SWEEPS[args.axis]
    return {"validate": "validate", "optimize": "optimize", "terms": "term_breakdown"}[args.verb]


def _error(kind: str, message: str, path: str = "") -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "path": path}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else SystemConfig()
        spec = ExperimentSpec(kind=_kind(args), grid=parse_grid(args.grid), trials=args.trials,
                              seed=args.seed, threads=args.threads,
                              params=parse_params(args.param))
        log.info("running %s", spec.kind)
        table = run_experiment(spec, cfg)
    except ConfigError as e:
        _error("config", str(e), e.path)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, OSError) as e:
        _error(type(e).__name__, str(e))
        return EXIT_RUNTIME
    if args.out:
        for path in write_results(table, args.out, mirror=not args.no_mirror):
            log.info("wrote %s", path)
    else:
        sys.stdout.write(table.to_csv())
    return 0


if __name__ == "__main__":
    sys.exit(main())
