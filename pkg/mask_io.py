"""
mask_io.py

Persistence for datasets and reports.

Layout of a dataset directory:
    manifest.json        written last; its absence marks a partial save
    slice_0000.png ...   8-bit single channel, 0 = background, 255 = foreground

Also writes calibration results (JSON), per-slice dice reports and sweep tables
(CSV), the sweep scatter (SVG, needs matplotlib) and the four-panel demo strip (PNG).
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

import config
from calibration import CalibrationResult, SweepRow
from mask_core import DiceScore, Mask, MaskNoiseError, SliceDice, VolumeDataset, mean_of

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    HAS_MPL = True
except Exception:
    HAS_MPL = False

logger = logging.getLogger(__name__)

PNG_PARAMS = [cv2.IMWRITE_PNG_COMPRESSION, 3]


class DatasetFormatError(MaskNoiseError):
    pass


class DatasetIntegrityError(MaskNoiseError):
    pass


class SliceDecodeError(MaskNoiseError):
    def __init__(self, path: Path, reason: str = "unreadable image"):
        super().__init__(f"{path}: {reason}")
        self.path = path


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    width: int
    height: int
    slice_count: int
    slice_files: Tuple[str, ...]
    slice_ids: Optional[Tuple[str, ...]] = None
    provenance: Optional[str] = None

    def to_dict(self) -> dict:
        d = {
            "format_version": self.format_version,
            "width": self.width,
            "height": self.height,
            "slice_count": self.slice_count,
            "slice_files": list(self.slice_files),
        }
        if self.slice_ids is not None:
            d["slice_ids"] = list(self.slice_ids)
        d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict, source: Path) -> "DatasetManifest":
        try:
            m = cls(
                format_version=int(d["format_version"]),
                width=int(d["width"]),
                height=int(d["height"]),
                slice_count=int(d["slice_count"]),
                slice_files=tuple(str(f) for f in d["slice_files"]),
                slice_ids=tuple(str(i) for i in d["slice_ids"]) if d.get("slice_ids") is not None else None,
                provenance=d.get("provenance"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetFormatError(f"{source}: malformed manifest ({e})") from None
        if m.format_version != config.FORMAT_VERSION:
            raise DatasetFormatError(f"{source}: unsupported format version {m.format_version}")
        if len(m.slice_files) != m.slice_count:
            raise DatasetFormatError(
                f"{source}: slice_count {m.slice_count} but {len(m.slice_files)} files listed"
            )
        if m.slice_ids is not None and len(m.slice_ids) != m.slice_count:
            raise DatasetFormatError(f"{source}: slice_ids length differs from slice_count")
        return m


def slice_file_name(index: int) -> str:
    return f"{config.SLICE_PREFIX}{index:0{config.SLICE_PAD}d}{config.SLICE_EXT}"


# --- LEITURA ---

def _binarize(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        code = cv2.COLOR_BGRA2GRAY if img.shape[2] == 4 else cv2.COLOR_BGR2GRAY
        img = cv2.cvtColor(img, code)
    if img.dtype == np.uint8:
        return img > config.THRESHOLD_8BIT
    if np.issubdtype(img.dtype, np.integer):
        return img > np.iinfo(img.dtype).max // 2
    return img > 0.5


def _read_slice(path: Path, width: int, height: int) -> Mask:
    if not path.is_file():
        raise DatasetIntegrityError(f"manifest lists missing slice file {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise SliceDecodeError(path)
    if img.shape[:2] != (height, width):
        raise DatasetIntegrityError(
            f"{path}: image is {img.shape[1]}x{img.shape[0]}, manifest says {width}x{height}"
        )
    return Mask(_binarize(img))


def load_dataset(path, workers: Optional[int] = config.WORKERS) -> VolumeDataset:
    root = Path(path)
    manifest_path = root / config.MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"{root}: no {config.MANIFEST_NAME} found")
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetFormatError(f"{manifest_path}: {e}") from None
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{manifest_path}: manifest must be a JSON object")
    manifest = DatasetManifest.from_dict(raw, manifest_path)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        slices = list(
            pool.map(lambda f: _read_slice(root / f, manifest.width, manifest.height), manifest.slice_files)
        )
    ids = manifest.slice_ids or tuple(Path(f).stem for f in manifest.slice_files)
    logger.info(f"Loaded {len(slices)} slices ({manifest.width}x{manifest.height}) from {root}")
    return VolumeDataset(tuple(slices), ids, manifest.provenance)


# --- ESCRITA ---

def _write_png(path: Path, img: np.ndarray) -> None:
    try:
        ok = cv2.imwrite(str(path), img, PNG_PARAMS)
    except cv2.error as e:
        raise OSError(f"could not write {path}: {e}") from None
    if not ok:
        raise OSError(f"could not write {path}")


def save_dataset(ds: VolumeDataset, path, workers: Optional[int] = config.WORKERS) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest_path = root / config.MANIFEST_NAME
    if manifest_path.exists():
        manifest_path.unlink()
    files = [slice_file_name(i) for i in range(len(ds))]

    def write(i):
        _write_png(root / files[i], ds.slices[i].to_uint8(config.FOREGROUND_VALUE))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(write, range(len(ds))))

    keep = set(files)
    for stale in root.glob(f"{config.SLICE_PREFIX}*{config.SLICE_EXT}"):
        if stale.name not in keep:
            logger.debug(f"Removing stale slice {stale.name}")
            stale.unlink()

    stems = tuple(Path(f).stem for f in files)
    manifest = DatasetManifest(
        format_version=config.FORMAT_VERSION,
        width=ds.width,
        height=ds.height,
        slice_count=len(ds),
        slice_files=tuple(files),
        slice_ids=None if ds.slice_ids == stems else ds.slice_ids,
        provenance=ds.provenance,
    )
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    logger.info(f"Saved {len(ds)} slices to {root}")


def write_calibration(result: CalibrationResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")


def write_report(rows: Sequence[SliceDice], path, pooled: Optional[DiceScore] = None) -> None:
    """CSV `slice_id,dice`; non-empty reports end with `# mean=` (and `# pooled=`) lines."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["slice_id", "dice"])
        for r in rows:
            w.writerow([r.slice_id, repr(r.value)])
        if rows:
            f.write(f"# mean={mean_of([r.value for r in rows])!r}\n")
            if pooled is not None:
                f.write(f"# pooled={pooled.value!r}\n")


def write_sweep(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["mode", "parameter", "seed", "mean_dice"])
        for r in rows:
            w.writerow([r.mode.value, repr(r.parameter), r.seed, repr(r.mean_dice)])


def write_sweep_svg(rows: Sequence[SweepRow], path) -> None:
    """Scatter of mean dice against the parameter."""
    if not HAS_MPL:
        raise RuntimeError("matplotlib is required for the SVG scatter (pip install matplotlib)")
    with plt.rc_context({"svg.hashsalt": "mask-noise", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.scatter([r.parameter for r in rows], [r.mean_dice for r in rows], s=14, color="#1f5fa8")
        mode = rows[0].mode.value if rows else ""
        ax.set_xlabel("sigma (px)" if mode in ("natural", "choppy") else "flip fraction")
        ax.set_ylabel("mean dice")
        ax.set_title(f"{mode} perturbation: agreement vs parameter")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_panel(masks: List[Mask], path, gap: int = 4) -> None:
    """Side-by-side strip of equally sized masks separated by grey columns."""
    if not masks:
        raise ValueError("no masks to draw")
    h = masks[0].height
    sep = np.full((h, gap), 128, dtype=np.uint8)
    parts = []
    for i, m in enumerate(masks):
        if m.height != h:
            raise ValueError("panel masks must share their height")
        if i:
            parts.append(sep)
        parts.append(m.to_uint8(config.FOREGROUND_VALUE))
    _write_png(Path(path), np.hstack(parts))
