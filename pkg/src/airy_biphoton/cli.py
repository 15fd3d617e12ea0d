"""Command-line driver: ``airy-biphoton [--config F] [--seed S] [--out D] <command>``.

Exit codes: 0 success, 1 failed oracle checks, 2 configuration error,
3 a fit did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io as aio
from .biphoton import gaussian_schmidt_spectrum, schmidt_number, schmidt_spectrum
from .campaigns import ConvergenceError, calibrate_ratio, detection_map, mask_spec, run_campaign, source_state
from ._validation import SamplingError
from .config import CAMPAIGNS, ConfigError, load_config, validate_config
from .grid import make_grid
from .masks import airy_mask
from .oracles import run_oracle_suite

EXIT_OK = 0
EXIT_ORACLE_FAILED = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3

logger = logging.getLogger("airy_biphoton")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="experiment config file")
    parser.add_argument("--seed", type=_u64, default=default, help="override experiment.seed")
    parser.add_argument("--out", type=Path, default=argparse.SUPPRESS if suppress else Path("out"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airy-biphoton", description="Airy-modulated biphoton entanglement simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run measurement campaigns and write artifacts")
    _global_flags(run, suppress=True)
    run.add_argument("campaigns", nargs="*", help=f"campaigns to run (default: all configured); one of {', '.join(CAMPAIGNS)}")
    run.add_argument("--calibrate", type=float, metavar="PRODUCT", default=None,
                     help="first bisect sigma_minus/sigma_plus so the free product equals PRODUCT")
    run.add_argument("--maps", action="store_true", help="also dump coincidence maps as BIPH files")
    run.add_argument("--workers", type=int, default=None, help="concurrent Z entries")

    oracle = sub.add_parser("oracle", help="run the oracle cross-checks")
    _global_flags(oracle, suppress=True)
    oracle.add_argument("--checks", nargs="*", default=None, help="subset of checks (default: from config)")

    mask = sub.add_parser("mask-dump", help="write the idler SLM mask as CSV")
    _global_flags(mask, suppress=True)
    mask.add_argument("--Z", type=float, default=0.0, help="Z in units of mask.z_unit")
    mask.add_argument("--domain", choices=("position", "wavenumber"), default="position")
    mask.add_argument("--output", type=Path, default=None, help="CSV path (default: <out>/mask_Z<Z>.csv)")

    schmidt = sub.add_parser("schmidt", help="Schmidt spectrum of the configured source")
    _global_flags(schmidt, suppress=True)
    schmidt.add_argument("--count", type=int, default=20, help="number of modes to report")
    return parser


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    validate_config(config)
    return config


def cmd_run(args, config) -> int:
    names = args.campaigns or [c for c in CAMPAIGNS if c in config.campaigns]
    for name in names:
        if name not in CAMPAIGNS:
            raise ConfigError(f"unknown campaign {name!r}; expected one of {CAMPAIGNS}")
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        config = replace(config, workers=args.workers)
    out = Path(args.out)
    if args.calibrate is not None:
        ratio, config = calibrate_ratio(config, target=args.calibrate)
        aio.write_json(
            {"target_product": args.calibrate, "ratio": ratio, "sigma_plus": config.source.sigma_plus,
             "sigma_minus": config.source.sigma_minus},
            out / "calibration.json",
        )
        print(f"calibrated sigma_minus/sigma_plus = {ratio:.6f} (sigma_minus = {config.source.sigma_minus:.6g} 1/m)")
    status = EXIT_OK
    for name in names:
        try:
            result = run_campaign(config, name, out)
        except ConvergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_CONVERGENCE
            continue
        print(f"{name}:")
        print("  Z      product    uncertainty")
        for row in result.rows:
            w = row.witness
            print(f"  {row.Z:<6g} {w.value:<10.4f} {w.uncertainty:.4f}{'  violated' if w.violated else ''}")
        if args.maps:
            for row in result.rows:
                for basis in ("position", "momentum"):
                    cmap, _ = detection_map(config, name, basis, row.Z)
                    aio.write_biph(cmap.values, out / name / aio.z_label(row.Z) / f"{basis}_map.biph")
    return status


def cmd_oracle(args, config) -> int:
    report = run_oracle_suite(config, args.checks)
    aio.write_json(report, Path(args.out) / "oracle.json")
    for check in report["checks"]:
        print(f"{'PASS' if check['passed'] else 'FAIL'} {check['name']} {check['message']}".rstrip())
    return EXIT_OK if report["passed"] else EXIT_ORACLE_FAILED


def cmd_mask_dump(args, config) -> int:
    grid = make_grid(config.grid.n, config.grid.dx)
    spec = mask_spec(config, args.Z)
    if args.domain == "position":
        mask = airy_mask(spec, grid, "position", focal=config.optics.focal)
    else:
        mask = airy_mask(spec, grid, "wavenumber")
    path = args.output or Path(args.out) / f"mask_Z{aio.z_label(args.Z)}.csv"
    aio.write_mask_csv(mask, path)
    print(path)
    return EXIT_OK


def cmd_schmidt(args, config) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    spectrum = schmidt_spectrum(source_state(config))
    report = {
        "sigma_plus": config.source.sigma_plus,
        "sigma_minus": config.source.sigma_minus,
        "ratio": config.source.sigma_minus / config.source.sigma_plus,
        "schmidt_number": schmidt_number(spectrum),
        "singular_values": spectrum[: args.count],
    }
    if config.source.kind == "gaussian":
        closed = gaussian_schmidt_spectrum(report["ratio"], args.count)
        report["closed_form_singular_values"] = closed
        r = report["ratio"]
        report["closed_form_schmidt_number"] = 0.5 * (r + 1.0 / r)
    aio.write_json(report, Path(args.out) / "schmidt.json")
    print(f"Schmidt number K = {report['schmidt_number']:.6f}")
    if "closed_form_schmidt_number" in report:
        print(f"closed form      = {report['closed_form_schmidt_number']:.6f}")
    for i, s in enumerate(np.asarray(spectrum[: args.count])):
        print(f"  {i:3d}  {s * s:.6e}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "mask-dump": cmd_mask_dump, "schmidt": cmd_schmidt}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _load(args)
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingError as exc:
        print(f"config error: grid too coarse: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
