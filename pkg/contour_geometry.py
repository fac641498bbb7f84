"""
contour_geometry.py

Pixel-grid geometry for the natural perturbation.

Principais funções:
- `extract_contours(mask)`: outer boundary of every 8-connected foreground component
  (Moore-neighbour tracing, clockwise on screen, holes ignored).
- `centroid(contour)`: mean of the contour points.
- `sample_contour(contour, spacing)`: every `spacing`-th point as a polygon.
- `fill_polygon(polygon, width, height)`: even-odd scanline fill, pixels whose
  centre lies on an edge are included, output clipped to the image.

Coordinates are always (row, col) with pixel centres on integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from mask_core import Mask

EPS = 1e-9

# Moore neighbourhood, clockwise on screen (rows grow downwards), starting west.
_RING = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_RING_INDEX = {d: i for i, d in enumerate(_RING)}
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed boundary loop of one component; points is an (n, 2) int array."""

    points: np.ndarray
    orientation: str = "clockwise"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("a contour needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Closed polygon; vertices is an (n, 2) float array of (row, col)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)


def _trace_component(comp: np.ndarray, start: Tuple[int, int]) -> List[Tuple[int, int]]:
    """Moore-neighbour trace of a padded single-component array.

    Stops when the first move (start -> second point) is about to repeat; the
    next state depends only on (current, next) so that transition closes the loop.
    """
    s = start
    p, b = s, (s[0], s[1] - 1)
    points = [s]
    seen = set()
    while True:
        k = _RING_INDEX[(b[0] - p[0], b[1] - p[1])]
        for step in range(1, 8):
            j = (k + step) % 8
            dr, dc = _RING[j]
            if comp[p[0] + dr, p[1] + dc]:
                break
        else:
            # isolated pixel
            return points
        c = (p[0] + dr, p[1] + dc)
        if p == s and len(points) > 1 and c == points[1]:
            break
        br, bc = _RING[(j - 1) % 8]
        nb = (p[0] + br, p[1] + bc)
        if (c, nb) in seen:
            break
        seen.add((c, nb))
        points.append(c)
        p, b = c, nb
    if len(points) > 1 and points[-1] == s:
        points.pop()
    return points


def extract_contours(mask: Mask) -> List[Contour]:
    labels, count = ndimage.label(mask.pixels, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    found = []
    for label, box in enumerate(ndimage.find_objects(labels), start=1):
        comp = np.pad(labels[box] == label, 1)
        first = np.flatnonzero(comp)[0]
        start = divmod(int(first), comp.shape[1])
        traced = _trace_component(comp, start)
        offset = np.array([box[0].start - 1, box[1].start - 1])
        found.append(np.asarray(traced, dtype=np.int64) + offset)
    found.sort(key=lambda pts: (int(pts[0, 0]), int(pts[0, 1])))
    return [Contour(pts) for pts in found]


def centroid(c: Contour) -> Tuple[float, float]:
    mean = c.points.astype(np.float64).mean(axis=0)
    return float(mean[0]), float(mean[1])


def sample_contour(c: Contour, spacing: int) -> Polygon:
    if spacing < 1:
        raise ValueError(f"spacing must be >= 1, got {spacing}")
    n = len(c.points)
    idx = np.arange(0, n, int(spacing))
    if len(idx) < 3 <= n:
        idx = np.linspace(0, n, 3, endpoint=False).astype(np.int64)
    return Polygon(c.points[idx])


def fill_polygon(p: Polygon, width: int, height: int) -> Mask:
    out = np.zeros((height, width), dtype=bool)
    v = p.vertices
    if len(v) == 0:
        return Mask(out)
    r0, c0 = v[:, 0], v[:, 1]
    r1, c1 = np.roll(r0, -1), np.roll(c0, -1)

    row_lo = max(0, math.ceil(float(r0.min()) - EPS))
    row_hi = min(height - 1, math.floor(float(r0.max()) + EPS))
    if row_lo > row_hi:
        return Mask(out)
    rows = np.arange(row_lo, row_hi + 1, dtype=np.float64)[:, None]
    band = out[row_lo:row_hi + 1]

    slanted = r0 != r1
    lo, hi = np.minimum(r0, r1), np.maximum(r0, r1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = c0 + (rows - r0) * (c1 - c0) / (r1 - r0)
    x = np.where(slanted, x, 0.0)

    # even-odd spans, half-open in the row direction
    cross = slanted & (rows >= lo) & (rows < hi)
    n_cross = int(cross.sum(axis=1).max())
    if n_cross:
        xs = np.sort(np.where(cross, x, np.inf), axis=1)[:, :n_cross]
        starts = np.ceil(xs[:, 0::2] - EPS)
        ends = np.floor(xs[:, 1::2] + EPS)
        valid = np.isfinite(ends)
        starts = np.clip(np.where(valid, starts, 0), 0, width)
        ends = np.clip(np.where(valid, ends, -1), -1, width - 1)
        valid &= starts <= ends
        ri = np.nonzero(valid)[0]
        diff = np.zeros((len(rows), width + 1), dtype=np.int32)
        np.add.at(diff, (ri, starts[valid].astype(np.int64)), 1)
        np.add.at(diff, (ri, ends[valid].astype(np.int64) + 1), -1)
        band |= np.cumsum(diff, axis=1)[:, :width] > 0

    # pixel centres lying exactly on a slanted edge
    on_edge = slanted & (rows >= lo - EPS) & (rows <= hi + EPS)
    xr = np.rint(np.where(on_edge, x, -1.0))
    on_edge &= (np.abs(x - xr) <= EPS) & (xr >= 0) & (xr <= width - 1)
    er, ei = np.nonzero(on_edge)
    band[er, xr[er, ei].astype(np.int64)] = True

    # horizontal edges (and single-vertex polygons)
    for i in np.flatnonzero(~slanted):
        r = round(float(r0[i]))
        if abs(r0[i] - r) > EPS or not row_lo <= r <= row_hi:
            continue
        a = max(0, math.ceil(min(c0[i], c1[i]) - EPS))
        b = min(width - 1, math.floor(max(c0[i], c1[i]) + EPS))
        if a <= b:
            band[r - row_lo, a:b + 1] = True

    return Mask(out)
