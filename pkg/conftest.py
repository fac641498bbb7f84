import hashlib
import os
from pathlib import Path

import numpy as np
import pytest

from mask_core import Mask, SeedSpec, VolumeDataset
from synthgen import ShapeKind, ShapeSpec, make_dataset

GOLDEN_DIR = Path(__file__).parent / "golden"
RECORD_GOLDEN = os.getenv("MASKNOISE_RECORD_GOLDEN") == "1"


def random_mask(rng: np.random.Generator, height: int, width: int, density: float = 0.4) -> Mask:
    return Mask(rng.random((height, width)) < density)


def tree_digest(path) -> str:
    """sha256 over every file (name + bytes) under a directory, in sorted order."""
    h = hashlib.sha256()
    root = Path(path)
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def check_golden(name: str, digest: str, directory: Path = GOLDEN_DIR, record: bool = RECORD_GOLDEN) -> None:
    """Compare a digest with <directory>/<name>.sha256; only MASKNOISE_RECORD_GOLDEN=1 writes one."""
    path = Path(directory) / f"{name}.sha256"
    if record:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(digest + "\n")
        return
    if not path.exists():
        pytest.skip(f"no golden digest {path.name}; record one with MASKNOISE_RECORD_GOLDEN=1")
    assert path.read_text().strip() == digest, f"{name} differs from {path}"


@pytest.fixture
def golden():
    return check_golden


@pytest.fixture(scope="session")
def blob_dataset() -> VolumeDataset:
    return make_dataset(ShapeSpec(ShapeKind.BLOB, size=128, radius=35, irregularity=0.15, seed=SeedSpec(11), count=12))


@pytest.fixture(scope="session")
def circle_dataset() -> VolumeDataset:
    return make_dataset(ShapeSpec(ShapeKind.CIRCLE, size=128, radius=40, seed=SeedSpec(3), count=6))
