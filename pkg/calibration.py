"""
calibration.py

Solves for the noise parameter that makes a perturbed dataset hit a target mean
per-slice dice against the originals.

Protocol: draw a fixed sample of slices with foreground, fix the seed, then bisect
the parameter until both bracket endpoints score within `tolerance` of the target.
The objective is deterministic because the sample and the per-slice streams never
change between evaluations.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import config
from mask_core import (
    DiceScore,
    EmptySampleError,
    MaskNoiseError,
    OpTag,
    SeedSpec,
    SpecError,
    VolumeDataset,
    dice,
    make_stream,
    mean_of,
    mean_slice_dice,
)
from perturbations import PerturbMode, PerturbSpec, perturb_dataset, perturb_mask

logger = logging.getLogger(__name__)


def default_initial_upper(mode: PerturbMode) -> float:
    if PerturbMode(mode) is PerturbMode.RANDOM:
        return config.INITIAL_UPPER_FRACTION
    return config.INITIAL_UPPER_SIGMA


def parameter_ceiling(mode: PerturbMode) -> float:
    return 1.0 if PerturbMode(mode) is PerturbMode.RANDOM else float("inf")


@dataclass(frozen=True)
class CalibrationConfig:
    mode: PerturbMode
    target: float
    tolerance: float = config.DEFAULT_TOLERANCE
    sample_size: int = config.DEFAULT_SAMPLE_SIZE
    seed: SeedSpec = field(default_factory=SeedSpec)
    initial_upper: Optional[float] = None
    max_iterations: int = config.MAX_ITERATIONS
    max_expansions: int = config.MAX_EXPANSIONS
    spacing: int = config.DEFAULT_SPACING

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", PerturbMode(self.mode))
        except ValueError:
            raise SpecError(f"unknown perturbation mode {self.mode!r}") from None
        if not 0 < self.target < 1:
            raise SpecError(f"target must lie in (0, 1), got {self.target}")
        if self.tolerance <= 0:
            raise SpecError(f"tolerance must be > 0, got {self.tolerance}")
        if self.sample_size < 1:
            raise SpecError(f"sample size must be >= 1, got {self.sample_size}")
        if self.initial_upper is None:
            object.__setattr__(self, "initial_upper", default_initial_upper(self.mode))
        if self.initial_upper <= 0:
            raise SpecError(f"initial upper bound must be > 0, got {self.initial_upper}")
        if self.max_iterations < 0 or self.max_expansions < 0:
            raise SpecError("iteration and expansion limits must be >= 0")
        if self.spacing < 1:
            raise SpecError(f"spacing must be >= 1, got {self.spacing}")


@dataclass(frozen=True)
class BracketStep:
    lower_bound: float
    lower_dice: float
    upper_bound: float
    upper_dice: float


@dataclass(frozen=True)
class CalibrationResult:
    mode: PerturbMode
    solved_parameter: float
    target: float
    tolerance: float
    achieved: float
    lower_bound: float
    lower_dice: float
    upper_bound: float
    upper_dice: float
    iterations: int
    sample_slice_ids: Tuple[str, ...]
    seed: int
    spacing: int
    converged: bool = True
    pooled_dice: Optional[float] = None
    history: Tuple[BracketStep, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["sample_slice_ids"] = list(self.sample_slice_ids)
        d["history"] = [asdict(h) for h in self.history]
        return d


class CalibrationError(MaskNoiseError):
    def __init__(self, message: str, result: CalibrationResult):
        super().__init__(message)
        self.result = result


class UnreachableTargetError(CalibrationError):
    pass


class NonConvergenceError(CalibrationError):
    pass


def eligible_slices(ds: VolumeDataset) -> List[str]:
    return [sid for sid, m in zip(ds.slice_ids, ds.slices) if not m.is_empty()]


def draw_sample(ds: VolumeDataset, sample_size: int, seed: SeedSpec) -> List[str]:
    """Sample without replacement from the eligible slices, kept in dataset order."""
    pool = eligible_slices(ds)
    if not pool:
        raise EmptySampleError("no slice contains foreground; nothing to calibrate on")
    if sample_size >= len(pool):
        return pool
    rng = make_stream(seed, 0, OpTag.SAMPLE)
    picked = np.sort(rng.choice(len(pool), size=sample_size, replace=False))
    return [pool[i] for i in picked]


def _sample_scores(ds, mode, parameter, sample, seed, spacing) -> List[DiceScore]:
    if not sample:
        raise EmptySampleError("calibration sample is empty")
    spec = PerturbSpec(mode, parameter, spacing, seed)
    scores = []
    for sid in sample:
        i = ds.index_of(sid)
        original = ds.slices[i]
        scores.append(dice(original, perturb_mask(original, spec, i)))
    return scores


def objective(
    ds: VolumeDataset,
    mode: PerturbMode,
    parameter: float,
    sample: Sequence[str],
    seed: SeedSpec,
    spacing: int = config.DEFAULT_SPACING,
) -> float:
    """Mean per-slice dice between the sample and its perturbed copy."""
    scores = _sample_scores(ds, mode, parameter, sample, seed, spacing)
    return mean_of([s.value for s in scores])


def calibrate(ds: VolumeDataset, cfg: CalibrationConfig) -> CalibrationResult:
    sample = draw_sample(ds, cfg.sample_size, cfg.seed)
    logger.info(
        f"Calibrating {cfg.mode.value} to dice {cfg.target} ± {cfg.tolerance} on {len(sample)} slices"
    )

    def f(x: float) -> float:
        value = objective(ds, cfg.mode, x, sample, cfg.seed, cfg.spacing)
        logger.debug(f"objective({x!r}) = {value!r}")
        return value

    target, tol = cfg.target, cfg.tolerance
    lo, f_lo = 0.0, f(0.0)
    hi = min(cfg.initial_upper, parameter_ceiling(cfg.mode))
    f_hi = f(hi)
    history = [BracketStep(lo, f_lo, hi, f_hi)]

    def result(iterations: int, converged: bool) -> CalibrationResult:
        solved = (lo + hi) / 2
        scores = _sample_scores(ds, cfg.mode, solved, sample, cfg.seed, cfg.spacing)
        pooled = DiceScore.from_counts(
            sum(s.intersection for s in scores),
            sum(s.size_a for s in scores),
            sum(s.size_b for s in scores),
        )
        return CalibrationResult(
            mode=cfg.mode,
            solved_parameter=solved,
            target=target,
            tolerance=tol,
            achieved=mean_of([s.value for s in scores]),
            lower_bound=lo,
            lower_dice=f_lo,
            upper_bound=hi,
            upper_dice=f_hi,
            iterations=iterations,
            sample_slice_ids=tuple(sample),
            seed=cfg.seed.global_seed,
            spacing=cfg.spacing,
            converged=converged,
            pooled_dice=pooled.value,
            history=tuple(history),
        )

    expansions = 0
    while f_hi > target:
        if expansions >= cfg.max_expansions or hi >= parameter_ceiling(cfg.mode):
            raise UnreachableTargetError(
                f"objective stays at {f_hi:.6f} > target {target} up to parameter {hi}",
                result(0, False),
            )
        lo, f_lo = hi, f_hi
        hi = min(hi * 2, parameter_ceiling(cfg.mode))
        f_hi = f(hi)
        expansions += 1
        history.append(BracketStep(lo, f_lo, hi, f_hi))
        logger.info(f"Expanded bracket to [{lo}, {hi}] (dice {f_lo:.6f} .. {f_hi:.6f})")

    iterations = 0
    while not (abs(f_lo - target) <= tol and abs(f_hi - target) <= tol):
        if iterations >= cfg.max_iterations:
            raise NonConvergenceError(
                f"no convergence after {iterations} bisection steps; "
                f"bracket [{lo}, {hi}] scores {f_lo:.6f} / {f_hi:.6f}",
                result(iterations, False),
            )
        mid = (lo + hi) / 2
        f_mid = f(mid)
        if f_mid > target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        iterations += 1
        history.append(BracketStep(lo, f_lo, hi, f_hi))
        logger.info(f"Step {iterations}: [{lo:.6g}, {hi:.6g}] dice {f_lo:.6f} .. {f_hi:.6f}")

    res = result(iterations, True)
    logger.info(
        f"Solved {cfg.mode.value} parameter {res.solved_parameter:.6g} (achieved {res.achieved:.6f})"
    )
    return res


def calibrate_grid(
    ds: VolumeDataset,
    cfg: CalibrationConfig,
    modes: Sequence[PerturbMode] = tuple(PerturbMode),
    targets: Sequence[float] = config.GRID_TARGETS,
) -> List[CalibrationResult]:
    """Every mode × target combination, reusing cfg for everything else.

    The initial bracket falls back to each mode's default. Conditions that fail keep
    their partial result (converged = False).
    """
    results = []
    for mode in modes:
        for target in targets:
            run = replace(cfg, mode=PerturbMode(mode), target=target, initial_upper=None)
            try:
                results.append(calibrate(ds, run))
            except CalibrationError as e:
                logger.warning(f"{run.mode.value} @ {target}: {e}")
                results.append(e.result)
    return results


@dataclass(frozen=True)
class SweepRow:
    mode: PerturbMode
    parameter: float
    seed: int
    mean_dice: float


def sweep(
    ds: VolumeDataset,
    mode: PerturbMode,
    parameters: Sequence[float],
    seeds: int,
    spacing: int = config.DEFAULT_SPACING,
    workers: Optional[int] = config.WORKERS,
    progress: bool = False,
) -> List[SweepRow]:
    """Dataset mean dice for every parameter × seed (seeds 0..seeds-1).

    Seed s perturbs exactly like `apply --seed s` would.
    """
    if seeds < 1:
        raise SpecError(f"seed count must be >= 1, got {seeds}")
    rows = []
    grid = [(p, s) for p in parameters for s in range(seeds)]
    for p, s in tqdm(grid, desc=f"sweep {PerturbMode(mode).value}", disable=not progress):
        spec = PerturbSpec(mode, p, spacing, SeedSpec(s))
        perturbed = perturb_dataset(ds, spec, workers=workers)
        rows.append(SweepRow(spec.mode, spec.parameter, s, mean_slice_dice(ds, perturbed)))
    return rows
