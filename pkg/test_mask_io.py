import csv
import json
import tempfile

import cv2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from calibration import BracketStep, CalibrationResult, SweepRow
from conftest import file_digest, random_mask, tree_digest
from mask_core import Mask, SeedSpec, VolumeDataset, mean_slice_dice, pooled_dice, slice_dice
from mask_io import (
    HAS_MPL,
    DatasetFormatError,
    DatasetIntegrityError,
    SliceDecodeError,
    load_dataset,
    save_dataset,
    slice_file_name,
    write_calibration,
    write_panel,
    write_report,
    write_sweep,
    write_sweep_svg,
)
from perturbations import PerturbMode, PerturbSpec, perturb_dataset
from synthgen import ShapeKind, ShapeSpec, make_dataset


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(8)
    return VolumeDataset.from_masks((random_mask(rng, 20, 30) for _ in range(5)), provenance="unit test")


def known_result():
    return CalibrationResult(
        mode=PerturbMode.RANDOM,
        solved_parameter=0.0625,
        target=0.9,
        tolerance=0.005,
        achieved=0.901234,
        lower_bound=0.05,
        lower_dice=0.903,
        upper_bound=0.075,
        upper_dice=0.898,
        iterations=4,
        sample_slice_ids=("slice_0001", "slice_0003"),
        seed=42,
        spacing=10,
        pooled_dice=0.9005,
        history=(BracketStep(0.0, 1.0, 0.5, 0.4),),
    )


# --- datasets ---

def test_slice_file_names_are_zero_padded():
    assert slice_file_name(0) == "slice_0000.png"
    assert slice_file_name(123) == "slice_0123.png"


def test_save_load_roundtrip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert loaded == small_dataset
    assert loaded.provenance == "unit test"
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert manifest["format_version"] == 1
    assert (manifest["width"], manifest["height"], manifest["slice_count"]) == (30, 20, 5)
    assert manifest["slice_files"][4] == "slice_0004.png"
    assert "slice_ids" not in manifest


@settings(max_examples=25, deadline=None)
@given(st.lists(arrays(bool, (6, 9)), min_size=1, max_size=4))
def test_roundtrip_property(stack):
    ds = VolumeDataset.from_masks(Mask(a) for a in stack)
    with tempfile.TemporaryDirectory() as d:
        save_dataset(ds, d)
        assert load_dataset(d) == ds


def test_save_writes_binary_pngs_and_manifest(tmp_path):
    ds = make_dataset(ShapeSpec(ShapeKind.BLOB, size=64, radius=20, seed=SeedSpec(2), count=50))
    save_dataset(ds, tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 51
    assert files[-1] == "slice_0049.png"
    assert "manifest.json" in files
    img = cv2.imread(str(tmp_path / "slice_0007.png"), cv2.IMREAD_UNCHANGED)
    assert img.dtype == np.uint8 and img.ndim == 2
    assert set(np.unique(img).tolist()) == {0, 255}


def test_save_load_save_is_byte_identical(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "a")
    save_dataset(load_dataset(tmp_path / "a"), tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_custom_slice_ids_survive(tmp_path, small_dataset):
    ds = VolumeDataset(small_dataset.slices, ("a", "b", "c", "d", "e"))
    save_dataset(ds, tmp_path)
    assert load_dataset(tmp_path).slice_ids == ("a", "b", "c", "d", "e")


def test_load_thresholds_foreign_images(tmp_path):
    img = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    cv2.imwrite(str(tmp_path / "slice_0000.png"), img)
    manifest = {"format_version": 1, "width": 4, "height": 1, "slice_count": 1, "slice_files": ["slice_0000.png"]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    ds = load_dataset(tmp_path)
    assert ds.slices[0].pixels.tolist() == [[False, False, True, True]]
    assert ds.slice_ids == ("slice_0000",)


def test_missing_manifest(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path)


def test_malformed_manifests(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    path = tmp_path / "manifest.json"
    good = json.loads(path.read_text())
    for broken in (
        {**good, "format_version": 2},
        {**good, "slice_count": 4},
        {k: v for k, v in good.items() if k != "width"},
    ):
        path.write_text(json.dumps(broken))
        with pytest.raises(DatasetFormatError):
            load_dataset(tmp_path)
    path.write_text("[1, 2]")
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path)


def test_missing_slice_file(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    (tmp_path / "slice_0002.png").unlink()
    with pytest.raises(DatasetIntegrityError, match="slice_0002.png"):
        load_dataset(tmp_path)


def test_dimension_mismatch(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    cv2.imwrite(str(tmp_path / "slice_0001.png"), np.zeros((20, 31), dtype=np.uint8))
    with pytest.raises(DatasetIntegrityError):
        load_dataset(tmp_path)


def test_undecodable_slice_names_the_file(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    (tmp_path / "slice_0003.png").write_bytes(b"not a png")
    with pytest.raises(SliceDecodeError) as info:
        load_dataset(tmp_path)
    assert info.value.path.name == "slice_0003.png"


def test_resave_replaces_manifest(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    perturbed = perturb_dataset(small_dataset, PerturbSpec(PerturbMode.RANDOM, 0.1, seed=SeedSpec(3)))
    save_dataset(perturbed, tmp_path)
    loaded = load_dataset(tmp_path)
    assert loaded == perturbed
    assert json.loads(loaded.provenance)["mode"] == "random"


def test_resave_smaller_dataset_removes_extra_slices(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    (tmp_path / "notes.txt").write_text("kept")
    smaller = VolumeDataset(small_dataset.slices[:2], small_dataset.slice_ids[:2])
    save_dataset(smaller, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["manifest.json", "notes.txt", "slice_0000.png", "slice_0001.png"]
    assert load_dataset(tmp_path) == smaller


# --- documents ---

def test_calibration_json(tmp_path, golden):
    path = tmp_path / "params.json"
    write_calibration(known_result(), path)
    d = json.loads(path.read_text())
    assert d["mode"] == "random"
    assert d["solved_parameter"] == 0.0625
    assert d["sample_slice_ids"] == ["slice_0001", "slice_0003"]
    assert d["converged"] is True
    assert d["history"] == [{"lower_bound": 0.0, "lower_dice": 1.0, "upper_bound": 0.5, "upper_dice": 0.4}]
    golden("calibration_json", file_digest(path))


def test_report_csv(tmp_path, small_dataset):
    other = perturb_dataset(small_dataset, PerturbSpec(PerturbMode.RANDOM, 0.2, seed=SeedSpec(1)))
    rows = slice_dice(small_dataset, other)
    path = tmp_path / "report.csv"
    write_report(rows, path, pooled_dice(small_dataset, other))
    lines = path.read_text().splitlines()
    assert lines[0] == "slice_id,dice"
    parsed = list(csv.reader(lines[1:6]))
    assert [r[0] for r in parsed] == list(small_dataset.slice_ids)
    assert [float(r[1]) for r in parsed] == [r.value for r in rows]
    assert lines[6] == f"# mean={mean_slice_dice(small_dataset, other)!r}"
    assert lines[7].startswith("# pooled=")


def test_empty_report_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_report([], path)
    assert path.read_text() == "slice_id,dice\n"


def test_sweep_csv(tmp_path):
    rows = [SweepRow(PerturbMode.CHOPPY, 1.0, 0, 0.97), SweepRow(PerturbMode.CHOPPY, 2.0, 0, 0.93)]
    path = tmp_path / "sweep.csv"
    write_sweep(rows, path)
    assert path.read_text().splitlines() == ["mode,parameter,seed,mean_dice", "choppy,1.0,0,0.97", "choppy,2.0,0,0.93"]


@pytest.mark.skipif(not HAS_MPL, reason="matplotlib not installed")
def test_sweep_svg_is_deterministic(tmp_path):
    rows = [SweepRow(PerturbMode.RANDOM, p, 0, 1 - p) for p in (0.01, 0.02, 0.05)]
    write_sweep_svg(rows, tmp_path / "a.svg")
    write_sweep_svg(rows, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert b"<svg" in (tmp_path / "a.svg").read_bytes()


def test_panel_strip(tmp_path):
    masks = [Mask(np.ones((8, 5), dtype=bool)), Mask.empty(5, 8), Mask(np.ones((8, 5), dtype=bool))]
    write_panel(masks, tmp_path / "panel.png", gap=2)
    img = cv2.imread(str(tmp_path / "panel.png"), cv2.IMREAD_UNCHANGED)
    assert img.shape == (8, 19)
    assert (img[:, 5:7] == 128).all()
    assert (img[:, :5] == 255).all() and (img[:, 7:12] == 0).all()
    with pytest.raises(ValueError):
        write_panel([], tmp_path / "none.png")
