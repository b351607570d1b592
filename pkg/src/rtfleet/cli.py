"""Command line entry point: ``rtfleet {simulate,sweep,synthesize,demo}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import load_config
from .model import ConfigError

log = logging.getLogger("rtfleet")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtfleet", description="Robo-Taxi fleet-sizing transport simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario to equilibrium")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: output_dir from the config)")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--threads", type=int, default=1, help="worker bound (runs are single-threaded)")

    w = sub.add_parser("sweep", help="run a fleet-size sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--fleet-sizes", required=True, help="comma separated, strictly increasing")
    w.add_argument("--taste", choices=("on", "off", "both"), default="both")
    w.add_argument("--out")
    w.add_argument("--seed", type=int)
    w.add_argument("--threads", type=int, default=1)

    y = sub.add_parser("synthesize", help="synthesize the population only")
    y.add_argument("--config", required=True)
    y.add_argument("--out")
    y.add_argument("--seed", type=int)

    d = sub.add_parser("demo", help="generate the synthetic demo scenario")
    d.add_argument("--grid-n", type=int, default=10)
    d.add_argument("--zones-per-side", type=int, default=4)
    d.add_argument("--persons", type=int, default=3000)
    d.add_argument("--seed", type=int, default=1)
    d.add_argument("--fleet-size", type=int, default=100)
    d.add_argument("--out", required=True)
    return p


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg.validate()
    if getattr(args, "threads", 1) < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def _out(cfg, args) -> Path:
    return Path(args.out) if args.out else cfg.base_dir / cfg.output_dir


def _run(args) -> int:
    if args.command == "demo":
        from .scenario import generate_demo_scenario

        if args.grid_n < 2:
            raise ConfigError("--grid-n must be >= 2")
        if args.persons < 1:
            raise ConfigError("--persons must be >= 1")
        path = generate_demo_scenario(args.grid_n, args.zones_per_side, args.persons, args.seed, args.out,
                                      args.fleet_size)
        print(f"demo scenario written to {path}")
        return 0
    cfg = _load(args)
    out = _out(cfg, args)
    if args.command == "simulate":
        from .runner import run_scenario

        r = run_scenario(cfg, out)
        print(f"{r.iterations} iterations, converged={r.converged}; outputs in {out}")
    elif args.command == "sweep":
        from .runner import run_sweep, validate_fleet_sizes

        try:
            sizes = validate_fleet_sizes(x for x in args.fleet_sizes.split(",") if x.strip())
        except ValueError as e:
            raise ConfigError(f"--fleet-sizes: {e}") from None
        run_sweep(cfg, sizes, args.taste, out)
        print(f"sweep outputs in {out}")
    else:
        from .runner import load_population

        out.mkdir(parents=True, exist_ok=True)
        pop = load_population(cfg, out)
        print(f"{len(pop.households)} households, {len(pop.persons)} persons written to {out}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
