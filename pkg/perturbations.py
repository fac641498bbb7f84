"""
perturbations.py

The three label-noise modes, each a pure function (mask, parameter, rng) -> mask:

- natural: sampled contour points pushed towards/away from the contour centroid by
  Normal(0, sigma^2) offsets, then refilled.
- choppy: every horizontal run of foreground has its start and end shifted by two
  independent rounded Normal(0, sigma^2) draws.
- random: the same fraction p of foreground and of background pixels is flipped.

`perturb_dataset` applies one PerturbSpec to every slice, each slice with its own
stream derived from (seed, slice index).
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from tqdm import tqdm

import config
from contour_geometry import Polygon, centroid, extract_contours, fill_polygon, sample_contour
from mask_core import Mask, OpTag, SeedSpec, SpecError, VolumeDataset, make_stream

logger = logging.getLogger(__name__)


class PerturbMode(str, Enum):
    NATURAL = "natural"
    CHOPPY = "choppy"
    RANDOM = "random"


@dataclass(frozen=True)
class PerturbSpec:
    """Mode + noise parameter + seed; fully determines a perturbed dataset.

    parameter is sigma in pixels for natural/choppy (variance = sigma**2) and the
    flip fraction for random.
    """

    mode: PerturbMode
    parameter: float
    spacing: int = config.DEFAULT_SPACING
    seed: SeedSpec = field(default_factory=SeedSpec)

    def __post_init__(self):
        try:
            mode = PerturbMode(self.mode)
        except ValueError:
            raise SpecError(f"unknown perturbation mode {self.mode!r}") from None
        object.__setattr__(self, "mode", mode)
        value = float(self.parameter)
        if not math.isfinite(value) or value < 0:
            raise SpecError(f"parameter must be a finite value >= 0, got {self.parameter}")
        if mode is PerturbMode.RANDOM and value > 1:
            raise SpecError(f"random-mode flip fraction must be <= 1, got {value}")
        object.__setattr__(self, "parameter", value)
        if int(self.spacing) < 1:
            raise SpecError(f"spacing must be >= 1, got {self.spacing}")
        object.__setattr__(self, "spacing", int(self.spacing))

    @property
    def variance(self) -> float:
        return self.parameter ** 2

    def with_parameter(self, parameter: float) -> "PerturbSpec":
        return PerturbSpec(self.mode, parameter, self.spacing, self.seed)

    def to_dict(self) -> dict:
        d = {"mode": self.mode.value, "parameter": self.parameter, "seed": self.seed.global_seed}
        if self.mode is PerturbMode.NATURAL:
            d["spacing"] = self.spacing
        return d

    def describe(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# --- NATURAL ---

def perturb_natural(mask: Mask, sigma: float, spacing: int, stream: np.random.Generator) -> Mask:
    if sigma == 0:
        return mask
    out = np.zeros(mask.shape, dtype=bool)
    for contour in extract_contours(mask):
        pts = contour.points
        if len(pts) < 3:
            # specks have no polygon; keep them as they are
            out[pts[:, 0], pts[:, 1]] = True
            continue
        vertices = sample_contour(contour, spacing).vertices
        radial = vertices - np.asarray(centroid(contour))
        norm = np.hypot(radial[:, 0], radial[:, 1])[:, None]
        unit = np.divide(radial, norm, out=np.zeros_like(radial), where=norm > 0)
        offsets = stream.normal(0.0, sigma, size=len(vertices))
        moved = Polygon(vertices + offsets[:, None] * unit)
        out |= fill_polygon(moved, mask.width, mask.height).pixels
    return Mask(out)


# --- CHOPPY ---

def find_runs(mask: Mask) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Maximal horizontal foreground runs as (row, start, end) arrays, raster order."""
    padded = np.zeros((mask.height, mask.width + 2), dtype=np.int8)
    padded[:, 1:-1] = mask.pixels
    d = np.diff(padded, axis=1)
    rows, starts = np.nonzero(d == 1)
    _, ends = np.nonzero(d == -1)
    return rows, starts, ends - 1


def shift_runs(mask: Mask, shifts: np.ndarray) -> Mask:
    """Move each run's (start, end) by the matching row of `shifts` and repaint."""
    rows, starts, ends = find_runs(mask)
    shifts = np.asarray(shifts, dtype=np.int64).reshape(-1, 2)
    if len(shifts) != len(rows):
        raise SpecError(f"expected {len(rows)} shift pairs, got {len(shifts)}")
    new_start = np.maximum(starts + shifts[:, 0], 0)
    new_end = np.minimum(ends + shifts[:, 1], mask.width - 1)
    keep = (starts + shifts[:, 0] <= ends + shifts[:, 1]) & (new_start <= new_end)
    diff = np.zeros((mask.height, mask.width + 1), dtype=np.int32)
    np.add.at(diff, (rows[keep], new_start[keep]), 1)
    np.add.at(diff, (rows[keep], new_end[keep] + 1), -1)
    return Mask(np.cumsum(diff, axis=1)[:, :mask.width] > 0)


def perturb_choppy(mask: Mask, sigma: float, stream: np.random.Generator) -> Mask:
    if sigma == 0:
        return mask
    rows, _, _ = find_runs(mask)
    draws = stream.normal(0.0, sigma, size=(len(rows), 2))
    return shift_runs(mask, round_half_away(draws))


# --- RANDOM ---

def flip_count(p: float, n: int) -> int:
    return int(math.floor(p * n + 0.5))


def random_mode_dice(fg: int, bg: int, p: float) -> float:
    """Exact dice of a random-mode flip with fraction p on fg/bg class counts."""
    kf, kb = flip_count(p, fg), flip_count(p, bg)
    total = fg + (fg - kf + kb)
    return 1.0 if total == 0 else 2.0 * (fg - kf) / total


def perturb_random(mask: Mask, p: float, stream: np.random.Generator) -> Mask:
    if p == 0:
        return mask
    flat = mask.pixels.ravel()
    fg = np.flatnonzero(flat)
    bg = np.flatnonzero(~flat)
    out = flat.copy()
    k_fg, k_bg = flip_count(p, len(fg)), flip_count(p, len(bg))
    if k_fg:
        out[stream.choice(fg, size=k_fg, replace=False)] = False
    if k_bg:
        out[stream.choice(bg, size=k_bg, replace=False)] = True
    return Mask(out.reshape(mask.shape))


# --- DATASET ---

def perturb_mask(mask: Mask, spec: PerturbSpec, slice_index: int) -> Mask:
    stream = make_stream(spec.seed, slice_index, OpTag.PERTURB)
    if spec.mode is PerturbMode.NATURAL:
        return perturb_natural(mask, spec.parameter, spec.spacing, stream)
    if spec.mode is PerturbMode.CHOPPY:
        return perturb_choppy(mask, spec.parameter, stream)
    return perturb_random(mask, spec.parameter, stream)


def perturb_dataset(
    ds: VolumeDataset,
    spec: PerturbSpec,
    workers: Optional[int] = config.WORKERS,
    progress: bool = False,
) -> VolumeDataset:
    logger.info(f"Perturbing {len(ds)} slices with {spec.describe()}")

    def work(i):
        return perturb_mask(ds.slices[i], spec, i)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = pool.map(work, range(len(ds)))
        slices = list(tqdm(results, total=len(ds), desc=spec.mode.value, disable=not progress))
    return ds.with_slices(slices, provenance=spec.describe())
