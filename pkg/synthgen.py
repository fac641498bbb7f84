"""
synthgen.py

Deterministic synthetic masks: closed digital disks and smooth star-convex blobs.

A blob's radius is a function of angle, r(theta) = R * (1 + irregularity * h(theta)),
where h is a sum of a few random harmonics (k >= 2, amplitude damped by 1/k^2 and
normalised so that |h| <= 1). Each slice draws its harmonics from its own stream.
Rasterisation compares squared distances; only the blob profile uses floating point.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

import config
from mask_core import BoundsError, Mask, OpTag, SeedSpec, SpecError, VolumeDataset, make_stream

logger = logging.getLogger(__name__)


class ShapeKind(str, Enum):
    CIRCLE = "circle"
    BLOB = "blob"


@dataclass(frozen=True)
class ShapeSpec:
    kind: ShapeKind = ShapeKind.BLOB
    size: int = config.DEFAULT_IMAGE_SIZE
    radius: float = config.DEFAULT_RADIUS
    irregularity: float = config.DEFAULT_IRREGULARITY
    seed: SeedSpec = field(default_factory=SeedSpec)
    count: int = 1
    harmonics: int = config.BLOB_HARMONICS

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ShapeKind(self.kind))
        except ValueError:
            raise SpecError(f"unknown shape kind {self.kind!r}") from None
        if self.size < 1:
            raise SpecError(f"size must be >= 1, got {self.size}")
        if not 0 <= self.radius < self.size / 2:
            raise BoundsError(f"radius must satisfy 0 <= radius < size/2, got {self.radius} for size {self.size}")
        if self.irregularity < 0:
            raise SpecError(f"irregularity must be >= 0, got {self.irregularity}")
        if self.count < 1:
            raise SpecError(f"count must be >= 1, got {self.count}")
        if self.harmonics < 1:
            raise SpecError(f"harmonics must be >= 1, got {self.harmonics}")

    @property
    def center(self) -> Tuple[int, int]:
        return self.size // 2, self.size // 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "size": self.size,
            "radius": self.radius,
            "irregularity": self.irregularity,
            "seed": self.seed.global_seed,
            "count": self.count,
            "harmonics": self.harmonics,
        }


def make_circle(size: int, radius: float, center: Optional[Tuple[int, int]] = None) -> Mask:
    """Closed digital disk: (r - cr)^2 + (c - cc)^2 <= radius^2."""
    cr, cc = center if center is not None else (size // 2, size // 2)
    reach = math.floor(radius) if radius >= 0 else -1
    if reach < 0 or cr - reach < 0 or cc - reach < 0 or cr + reach > size - 1 or cc + reach > size - 1:
        raise BoundsError(f"circle of radius {radius} at ({cr}, {cc}) does not fit a {size}x{size} image")
    rr, cols = np.ogrid[:size, :size]
    return Mask((rr - cr) ** 2 + (cols - cc) ** 2 <= radius * radius)


def make_blob(spec: ShapeSpec, slice_index: int) -> Mask:
    if spec.kind is ShapeKind.CIRCLE or spec.irregularity == 0:
        return make_circle(spec.size, spec.radius, spec.center)
    rng = make_stream(spec.seed, slice_index, OpTag.SYNTH)
    k = np.arange(2, 2 + spec.harmonics, dtype=np.float64)
    amp = rng.normal(0.0, 1.0, size=len(k)) / k ** 2
    phase = rng.uniform(0.0, 2 * np.pi, size=len(k))
    amp /= max(np.abs(amp).sum(), 1e-12)

    cr, cc = spec.center
    rr, cols = np.ogrid[:spec.size, :spec.size]
    dr, dc = rr - cr, cols - cc
    theta = np.arctan2(dr, dc)
    profile = np.ones(theta.shape)
    for a, kk, ph in zip(amp, k, phase):
        profile += spec.irregularity * a * np.cos(kk * theta + ph)
    limit = min(cr, cc, spec.size - 1 - cr, spec.size - 1 - cc)
    r_theta = np.clip(spec.radius * profile, 0.0, limit)
    return Mask(dr * dr + dc * dc <= r_theta * r_theta)


def make_dataset(spec: ShapeSpec) -> VolumeDataset:
    logger.info(f"Generating {spec.count} {spec.kind.value} slices at {spec.size}x{spec.size}")
    masks = [make_blob(spec, i) for i in range(spec.count)]
    return VolumeDataset.from_masks(masks, provenance=json.dumps(spec.to_dict(), sort_keys=True))
