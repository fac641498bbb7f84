"""
mask_core.py

Core types shared by every other module: binary masks, aligned slice datasets,
the seed contract and Dice-Sorensen agreement.

Principais funções:
- `dice(a, b)`: DiceScore between two aligned masks.
- `mean_slice_dice(a, b, slice_filter)`: mean of per-slice dice (calibration objective).
- `pooled_dice(a, b, slice_filter)`: voxel-pooled dice (report-only statistic).
- `stream_seed(seed, slice_index, op_tag)` / `make_stream(...)`: per-slice RNG streams.

Streams use numpy's SeedSequence to mix (global_seed, slice_index, op_tag) and a
PCG64 bit generator, so the same inputs give the same bytes on every platform.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

import config

logger = logging.getLogger(__name__)

UINT64_MAX = (1 << 64) - 1


# --- ERROS ---

class MaskNoiseError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatchError(MaskNoiseError, ValueError):
    pass


class AlignmentError(MaskNoiseError, ValueError):
    pass


class EmptySampleError(MaskNoiseError, ValueError):
    pass


class SpecError(MaskNoiseError, ValueError):
    """Invalid perturbation / calibration / shape parameters."""


class BoundsError(SpecError):
    """Geometry that does not fit inside the image."""


# --- TIPOS ---

@dataclass(frozen=True, eq=False)
class Mask:
    """Immutable 2D binary mask (row-major, True = foreground)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatchError(f"mask must be at least 1x1, got shape {arr.shape}")
        arr = np.array(arr != 0, dtype=bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.pixels))

    def background_count(self) -> int:
        return self.pixels.size - self.foreground_count()

    def is_empty(self) -> bool:
        return not self.pixels.any()

    def to_uint8(self, foreground: int = 255) -> np.ndarray:
        return self.pixels.astype(np.uint8) * np.uint8(foreground)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None

    def __repr__(self):
        return f"Mask({self.width}x{self.height}, foreground={self.foreground_count()})"


@dataclass(frozen=True, eq=False)
class VolumeDataset:
    """Ordered, aligned collection of masks (one per slice)."""

    slices: Tuple[Mask, ...]
    slice_ids: Tuple[str, ...]
    provenance: Optional[str] = None

    def __post_init__(self):
        slices = tuple(self.slices)
        ids = tuple(str(i) for i in self.slice_ids)
        if len(slices) != len(ids):
            raise AlignmentError(f"{len(slices)} slices but {len(ids)} slice ids")
        if len(set(ids)) != len(ids):
            raise AlignmentError("slice ids must be unique")
        if slices:
            shape = slices[0].shape
            for sid, m in zip(ids, slices):
                if m.shape != shape:
                    raise ShapeMismatchError(
                        f"slice {sid} has shape {m.shape}, expected {shape}"
                    )
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "slice_ids", ids)
        object.__setattr__(self, "_index", {sid: i for i, sid in enumerate(ids)})

    @classmethod
    def from_masks(cls, masks: Iterable[Mask], provenance: Optional[str] = None) -> "VolumeDataset":
        masks = tuple(masks)
        return cls(masks, default_slice_ids(len(masks)), provenance)

    @property
    def width(self) -> int:
        return self.slices[0].width if self.slices else 0

    @property
    def height(self) -> int:
        return self.slices[0].height if self.slices else 0

    def __len__(self):
        return len(self.slices)

    def index_of(self, slice_id: str) -> int:
        try:
            return self._index[slice_id]
        except KeyError:
            raise AlignmentError(f"unknown slice id {slice_id!r}") from None

    def by_id(self, slice_id: str) -> Mask:
        return self.slices[self.index_of(slice_id)]

    def with_slices(self, slices: Sequence[Mask], provenance: Optional[str] = None) -> "VolumeDataset":
        return VolumeDataset(tuple(slices), self.slice_ids, provenance)

    def __eq__(self, other):
        if not isinstance(other, VolumeDataset):
            return NotImplemented
        return self.slice_ids == other.slice_ids and all(
            a == b for a, b in zip(self.slices, other.slices)
        )

    __hash__ = None


def default_slice_ids(count: int, prefix: str = config.SLICE_PREFIX, pad: int = config.SLICE_PAD) -> Tuple[str, ...]:
    return tuple(f"{prefix}{i:0{pad}d}" for i in range(count))


class OpTag(IntEnum):
    """Separates the random streams used by different operations."""

    PERTURB = 1
    SYNTH = 2
    SAMPLE = 3


@dataclass(frozen=True)
class SeedSpec:
    global_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.global_seed) <= UINT64_MAX:
            raise SpecError(f"seed must be an unsigned 64-bit integer, got {self.global_seed}")
        object.__setattr__(self, "global_seed", int(self.global_seed))


@dataclass(frozen=True)
class DiceScore:
    value: float
    intersection: int
    size_a: int
    size_b: int

    @classmethod
    def from_counts(cls, intersection: int, size_a: int, size_b: int) -> "DiceScore":
        total = size_a + size_b
        value = 1.0 if total == 0 else 2.0 * intersection / total
        return cls(value, int(intersection), int(size_a), int(size_b))


@dataclass(frozen=True)
class SliceDice:
    """One row of a per-slice agreement report."""

    slice_id: str
    score: DiceScore = field(repr=False)

    @property
    def value(self) -> float:
        return self.score.value


# --- SEMENTES ---

def stream_seed(seed: SeedSpec, slice_index: int, op_tag: int) -> int:
    """Mix (global_seed, slice_index, op_tag) into a 64-bit stream seed."""
    ss = np.random.SeedSequence(
        entropy=seed.global_seed, spawn_key=(int(slice_index), int(op_tag))
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_stream(seed: SeedSpec, slice_index: int, op_tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed, slice_index, op_tag)))


# --- DICE ---

def _check_same_shape(a: Mask, b: Mask) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def dice(a: Mask, b: Mask) -> DiceScore:
    _check_same_shape(a, b)
    inter = int(np.count_nonzero(a.pixels & b.pixels))
    return DiceScore.from_counts(inter, a.foreground_count(), b.foreground_count())


def mean_of(values: Sequence[float]) -> float:
    """Arithmetic mean used for every aggregate agreement figure."""
    if len(values) == 0:
        raise EmptySampleError("cannot average an empty sample")
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def check_aligned(a: VolumeDataset, b: VolumeDataset) -> None:
    if a.slice_ids != b.slice_ids:
        missing = sorted(set(a.slice_ids) ^ set(b.slice_ids))
        detail = f" (differing ids: {', '.join(missing[:5])})" if missing else " (order differs)"
        raise AlignmentError(f"datasets are not aligned{detail}")
    if len(a) and (a.width, a.height) != (b.width, b.height):
        raise AlignmentError(
            f"dataset dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def slice_dice(
    a: VolumeDataset, b: VolumeDataset, slice_filter: Optional[Sequence[str]] = None
) -> list:
    """Per-slice dice records, in filter order (all slices when no filter)."""
    check_aligned(a, b)
    ids = a.slice_ids if slice_filter is None else tuple(slice_filter)
    rows = []
    for sid in ids:
        i = a.index_of(sid)
        rows.append(SliceDice(sid, dice(a.slices[i], b.slices[i])))
    return rows


def mean_slice_dice(
    a: VolumeDataset, b: VolumeDataset, slice_filter: Optional[Sequence[str]] = None
) -> float:
    if slice_filter is not None and len(slice_filter) == 0:
        raise EmptySampleError("slice filter is empty")
    rows = slice_dice(a, b, slice_filter)
    return mean_of([r.value for r in rows])


def pooled_dice(
    a: VolumeDataset, b: VolumeDataset, slice_filter: Optional[Sequence[str]] = None
) -> DiceScore:
    if slice_filter is not None and len(slice_filter) == 0:
        raise EmptySampleError("slice filter is empty")
    rows = slice_dice(a, b, slice_filter)
    if not rows:
        raise EmptySampleError("no slices to pool")
    return DiceScore.from_counts(
        sum(r.score.intersection for r in rows),
        sum(r.score.size_a for r in rows),
        sum(r.score.size_b for r in rows),
    )
