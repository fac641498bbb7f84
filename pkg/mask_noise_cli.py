#!/usr/bin/env python3
"""
mask_noise_cli.py

Command-line surface for synthetic data, perturbation, calibration and reports.

Subcommands:
    synth      generate a circle/blob dataset
    apply      perturb a dataset with one mode and parameter
    calibrate  solve the parameter for a target mean dice (writes params JSON)
    dice       per-slice agreement between two datasets
    sweep      mean dice for a list of parameters × seeds (CSV, optional SVG)
    grid       calibrate every mode × target (0.95 / 0.90 / 0.85 by default)
    figure     four-panel strip: unperturbed, natural, choppy, random

Exit codes: 0 ok, 1 usage error, 2 data/format error, 3 calibration did not converge.

Example:
    python mask_noise_cli.py synth --kind circle --size 512 --radius 100 --count 1 --seed 1 --out d/
    python mask_noise_cli.py apply --mode natural --param 5 --spacing 10 --seed 1 --in d/ --out n/
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from colorama import Fore, Style, just_fix_windows_console

import config
from calibration import (
    CalibrationConfig,
    CalibrationError,
    calibrate,
    calibrate_grid,
    eligible_slices,
    sweep,
)
from mask_core import (
    AlignmentError,
    EmptySampleError,
    SeedSpec,
    ShapeMismatchError,
    SpecError,
    mean_slice_dice,
    pooled_dice,
    slice_dice,
)
from mask_io import (
    DatasetFormatError,
    DatasetIntegrityError,
    SliceDecodeError,
    load_dataset,
    save_dataset,
    write_calibration,
    write_panel,
    write_report,
    write_sweep,
    write_sweep_svg,
)
from perturbations import PerturbMode, PerturbSpec, perturb_dataset, perturb_mask
from synthgen import ShapeKind, ShapeSpec, make_dataset

logger = logging.getLogger("mask_noise")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3

DATA_ERRORS = (
    DatasetFormatError,
    DatasetIntegrityError,
    SliceDecodeError,
    AlignmentError,
    ShapeMismatchError,
    EmptySampleError,
    OSError,
)


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; our contract says 1."""

    def __init__(self, *args, **kwargs):
        # no prefix matching: --seed must not become --seeds
        kwargs["allow_abbrev"] = False
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fail(message: str) -> None:
    if sys.stderr.isatty():
        message = f"{Fore.RED}{message}{Style.RESET_ALL}"
    print(f"[❌] {message}", file=sys.stderr)


def _float_list(text: str) -> List[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise UsageError("empty parameter list")
    return values


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


# --- SUBCOMANDOS ---

def cmd_synth(args) -> int:
    spec = ShapeSpec(
        kind=args.kind,
        size=args.size,
        radius=args.radius,
        irregularity=args.irregularity,
        seed=SeedSpec(args.seed),
        count=args.count,
    )
    ds = make_dataset(spec)
    save_dataset(ds, args.out, workers=args.workers)
    print(f"slices: {len(ds)}")
    print(f"dimensions: {ds.width}x{ds.height}")
    return EXIT_OK


def cmd_apply(args) -> int:
    spec = PerturbSpec(args.mode, args.param, args.spacing, SeedSpec(args.seed))
    ds = load_dataset(args.input, workers=args.workers)
    perturbed = perturb_dataset(ds, spec, workers=args.workers, progress=_progress(args))
    save_dataset(perturbed, args.out, workers=args.workers)
    print(f"slices: {len(perturbed)}")
    print(f"mean_dice: {mean_slice_dice(ds, perturbed):.6f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = CalibrationConfig(
        mode=args.mode,
        target=args.target,
        tolerance=args.tolerance,
        sample_size=args.sample,
        seed=SeedSpec(args.seed),
        initial_upper=args.initial_upper,
        max_iterations=args.max_iterations,
        max_expansions=args.max_expansions,
        spacing=args.spacing,
    )
    ds = load_dataset(args.input, workers=args.workers)
    try:
        result = calibrate(ds, cfg)
    except CalibrationError as e:
        write_calibration(e.result, args.out)
        _fail(str(e))
        print("converged: false")
        print(f"solved_parameter: {e.result.solved_parameter!r}")
        return EXIT_NOT_CONVERGED
    write_calibration(result, args.out)
    print("converged: true")
    print(f"solved_parameter: {result.solved_parameter!r}")
    print(f"achieved: {result.achieved:.6f}")
    print(f"iterations: {result.iterations}")
    return EXIT_OK


def cmd_dice(args) -> int:
    a = load_dataset(args.a, workers=args.workers)
    b = load_dataset(args.b, workers=args.workers)
    rows = slice_dice(a, b)
    pooled = pooled_dice(a, b) if rows else None
    if args.out:
        write_report(rows, args.out, pooled)
    else:
        print("slice_id,dice")
        for r in rows:
            print(f"{r.slice_id},{r.value!r}")
    if rows:
        print(f"mean_dice: {mean_slice_dice(a, b):.6f}")
        print(f"pooled_dice: {pooled.value:.6f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    params = _float_list(args.params)
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    ds = load_dataset(args.input, workers=args.workers)
    rows = sweep(ds, args.mode, params, args.seeds, args.spacing, args.workers, _progress(args))
    write_sweep(rows, args.out)
    if args.svg:
        try:
            write_sweep_svg(rows, args.svg)
        except RuntimeError as e:
            raise UsageError(str(e)) from None
    print(f"rows: {len(rows)}")
    return EXIT_OK


def cmd_grid(args) -> int:
    targets = _float_list(args.targets)
    try:
        modes = [PerturbMode(m.strip()) for m in args.modes.split(",") if m.strip()]
    except ValueError:
        raise UsageError(f"unknown mode in {args.modes!r}") from None
    base = CalibrationConfig(
        mode=modes[0] if modes else PerturbMode.NATURAL,
        target=targets[0],
        tolerance=args.tolerance,
        sample_size=args.sample,
        seed=SeedSpec(args.seed),
        spacing=args.spacing,
    )
    ds = load_dataset(args.input, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for result in calibrate_grid(ds, base, modes, targets):
        name = f"{result.mode.value}_{result.target:g}"
        write_calibration(result, out / f"params_{name}.json")
        if result.converged and args.apply:
            spec = PerturbSpec(result.mode, result.solved_parameter, args.spacing, SeedSpec(args.seed))
            save_dataset(perturb_dataset(ds, spec, workers=args.workers), out / name, workers=args.workers)
        if not result.converged:
            status = EXIT_NOT_CONVERGED
        print(
            f"{name}: parameter={result.solved_parameter!r} achieved={result.achieved:.6f} "
            f"converged={str(result.converged).lower()}"
        )
    return status


def cmd_figure(args) -> int:
    ds = load_dataset(args.input, workers=args.workers)
    slice_id = args.slice
    if slice_id is None:
        candidates = eligible_slices(ds) or list(ds.slice_ids)
        if not candidates:
            raise EmptySampleError("dataset has no slices")
        slice_id = candidates[0]
    index = ds.index_of(slice_id)
    original = ds.slices[index]
    seed = SeedSpec(args.seed)
    panels = [original]
    for mode, value in (
        (PerturbMode.NATURAL, args.natural),
        (PerturbMode.CHOPPY, args.choppy),
        (PerturbMode.RANDOM, args.random),
    ):
        panels.append(perturb_mask(original, PerturbSpec(mode, value, args.spacing, seed), index))
    write_panel(panels, args.out)
    print(f"slice: {slice_id}")
    print(f"panel: {args.out}")
    return EXIT_OK


# --- PARSER ---

def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="warnings only, no progress bars")
    common.add_argument("--workers", type=int, default=config.WORKERS, help="threads for slice work")

    parser = CliParser(prog="mask_noise", description="Controlled label noise for binary segmentation masks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    modes = [m.value for m in PerturbMode]

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--kind", choices=[k.value for k in ShapeKind], default=ShapeKind.BLOB.value)
    p.add_argument("--size", type=int, default=config.DEFAULT_IMAGE_SIZE)
    p.add_argument("--radius", type=float, default=config.DEFAULT_RADIUS)
    p.add_argument("--irregularity", type=float, default=config.DEFAULT_IRREGULARITY)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("apply", parents=[common], help="perturb a dataset")
    p.add_argument("--mode", choices=modes, required=True)
    p.add_argument("--param", type=float, required=True, help="sigma in pixels, or flip fraction for random")
    p.add_argument("--spacing", type=int, default=config.DEFAULT_SPACING, help="natural mode contour sampling")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_apply)

    p = sub.add_parser("calibrate", parents=[common], help="solve the parameter for a target dice")
    p.add_argument("--mode", choices=modes, required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--tolerance", type=float, default=config.DEFAULT_TOLERANCE)
    p.add_argument("--sample", type=int, default=config.DEFAULT_SAMPLE_SIZE)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--initial-upper", type=float, default=None)
    p.add_argument("--max-expansions", type=int, default=config.MAX_EXPANSIONS)
    p.add_argument("--max-iterations", type=int, default=config.MAX_ITERATIONS)
    p.add_argument("--spacing", type=int, default=config.DEFAULT_SPACING)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="params JSON")
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("dice", parents=[common], help="per-slice agreement of two datasets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None, help="report CSV")
    p.set_defaults(handler=cmd_dice)

    p = sub.add_parser("sweep", parents=[common], help="mean dice over parameters × seeds")
    p.add_argument("--mode", choices=modes, required=True)
    p.add_argument("--params", required=True, help="comma-separated parameter list")
    p.add_argument("--seeds", type=int, required=True, help="seeds 0..n-1")
    p.add_argument("--spacing", type=int, default=config.DEFAULT_SPACING)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="sweep CSV")
    p.add_argument("--svg", default=None, help="scatter plot")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("grid", parents=[common], help="calibrate every mode × target")
    p.add_argument("--modes", default=",".join(modes))
    p.add_argument("--targets", default=",".join(str(t) for t in config.GRID_TARGETS))
    p.add_argument("--tolerance", type=float, default=config.DEFAULT_TOLERANCE)
    p.add_argument("--sample", type=int, default=config.DEFAULT_SAMPLE_SIZE)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spacing", type=int, default=config.DEFAULT_SPACING)
    p.add_argument("--apply", action="store_true", help="also write each perturbed dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("figure", parents=[common], help="four-panel demo strip")
    p.add_argument("--slice", default=None, help="slice id (default: first with foreground)")
    p.add_argument("--natural", type=float, default=5.0)
    p.add_argument("--choppy", type=float, default=3.0)
    p.add_argument("--random", type=float, default=0.05)
    p.add_argument("--spacing", type=int, default=config.DEFAULT_SPACING)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="PNG path")
    p.set_defaults(handler=cmd_figure)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    just_fix_windows_console()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _fail(str(e))
        return EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else config.LOG_LEVEL
    logging.basicConfig(level=level, format=config.LOG_FORMAT, stream=sys.stderr, force=True)
    logger.debug(f"Running {args.command} with {vars(args)}")

    try:
        return args.handler(args)
    except (UsageError, SpecError) as e:
        _fail(str(e))
        return EXIT_USAGE
    except DATA_ERRORS as e:
        _fail(str(e))
        return EXIT_DATA
    except CalibrationError as e:
        _fail(str(e))
        return EXIT_NOT_CONVERGED
    except KeyboardInterrupt:
        _fail("interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
