"""Command-line entry point: ``ghostimg <subcommand> [--config F] [--seed S] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .scenario import ParameterError

SUBCOMMANDS = {
    "analytic": "analytic-sweep",
    "simulate": "simulate-image",
    "validate": "validate-stats",
    "psf": "psf",
    "contrast": "contrast",
    "snr-curve": "snr-curve",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghostimg",
                                description="Reflective ghost imaging through turbulence: "
                                            "analytic model and Monte Carlo checks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        s = sub.add_parser(name, help=f"run a {kind} experiment")
        s.add_argument("--config", help="JSON experiment config (keys of ExperimentConfig)")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", help="output directory for report.json, CSV and images")
        s.add_argument("--preset", choices=["paper-sec5"],
                       help="use the long-range operating point for analytic sweeps")
        s.add_argument("--workers", type=int, help="threads for independent trials")
        if name == "analytic":
            s.add_argument("--sweep", choices=harness.SWEEP_VARIABLES, default=None)
            s.add_argument("--brightness", type=float, help="photons per mode I_Omega")
            s.add_argument("--beta", type=float)
            s.add_argument("--cn2", type=float)
        if name in ("validate",):
            s.add_argument("--samples", type=int, help="frames/screens per statistical suite")
        s.add_argument("--quiet", action="store_true", help="print only the verdict")
    return p


def config_from_args(args) -> harness.ExperimentConfig:
    kind = SUBCOMMANDS[args.command]
    if args.preset and kind != "analytic-sweep":
        raise ParameterError("--preset paper-sec5 applies to the analytic subcommand")
    if args.config:
        with open(args.config) as f:
            data = json.load(f)
        data.setdefault("kind", kind)
        if data["kind"] != kind:
            raise ParameterError(f"config kind {data['kind']!r} does not match {args.command}")
        cfg = harness.ExperimentConfig.from_dict(data)
    else:
        cfg = harness.preset_config(kind)
    changes = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out:
        changes["out"] = args.out
    if args.workers:
        changes["workers"] = args.workers
    opts = dict(cfg.options)
    if kind == "analytic-sweep":
        if args.sweep:
            changes["sweep"] = {"variable": args.sweep}
        for key, val in (("brightness_omega", args.brightness), ("beta", args.beta),
                         ("cn2", args.cn2)):
            if val is not None:
                opts[key] = val
    if kind == "validate-stats" and args.samples:
        opts["samples"] = args.samples
    changes["options"] = opts
    return cfg.replace(**changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = harness.run(cfg)
    except (ParameterError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        if report.summary():
            print(report.summary())
        for w in report.warnings:
            print(f"warning: {w}")
        for a in report.artifacts:
            print(f"wrote {a}")
    print("ok" if report.passed else "FAILED")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
