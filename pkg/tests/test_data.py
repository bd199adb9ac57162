import numpy as np
import pytest
from hypothesis import given, strategies as st

from scu_cgan.data import (FIRE, NON_FIRE, RegionBox, SceneRecord, box_to_mask, check_image,
                           load_dataset, mask_to_box, read_manifest, save_dataset, synth_dataset,
                           synth_flame_patch, synth_scene)
from scu_cgan.errors import BoundsError, DimensionError, ParseError


def test_synth_scene_is_deterministic():
    a = synth_scene(7, (64, 64), FIRE)
    b = synth_scene(7, (64, 64), FIRE)
    assert a.image.tobytes() == b.image.tobytes()
    assert a.boxes == b.boxes


def test_different_seeds_differ_in_many_pixels():
    a = synth_scene(7, (64, 64), NON_FIRE).image
    b = synth_scene(8, (64, 64), NON_FIRE).image
    differing = np.any(a != b, axis=0).mean()
    assert differing >= 0.01


def test_fire_box_brighter_than_background():
    for seed in range(100):
        rec = synth_scene(seed, (64, 64), FIRE)
        inside = box_to_mask(rec.target_box, rec.size)[0] > 0
        intensity = rec.image.mean(axis=0)
        assert intensity[inside].mean() > intensity[~inside].mean(), seed


def test_fire_box_is_tight_around_flame():
    rec = synth_scene(11, (64, 64), FIRE)
    bg = synth_scene(11, (64, 64), NON_FIRE)
    # same seed -> same room; the flame is the only difference
    changed = np.any(rec.image != bg.image, axis=0)
    assert mask_to_box(changed) == rec.target_box


@pytest.mark.parametrize("size", [(32, 32), (64, 64), (64, 128), (256, 256)])
def test_scene_contract(size):
    for domain in (FIRE, NON_FIRE):
        rec = synth_scene(3, size, domain)
        check_image(rec.image)
        assert rec.image.dtype == np.float32
        assert len(rec.boxes) == 1
        rec.target_box.check_generative(size)


@pytest.mark.parametrize("size", [(60, 64), (64, 36), (24, 24)])
def test_scene_rejects_bad_sizes(size):
    with pytest.raises(DimensionError):
        synth_scene(0, size)


def test_flame_patch():
    p = synth_flame_patch(1, (16, 16))
    assert p[0].mean() > p[2].mean()
    assert np.array_equal(p, synth_flame_patch(1, (16, 16)))
    small = synth_flame_patch(1, (8, 8))
    assert small.shape == (3, 8, 8)
    assert small.min() >= -1 and small.max() <= 1
    with pytest.raises(DimensionError):
        synth_flame_patch(1, (4, 8))


@given(st.integers(0, 2**63))
def test_flame_patch_warm_for_any_seed(seed):
    p = synth_flame_patch(seed, (12, 20))
    assert p[0].mean() > p[2].mean()
    assert p.min() >= -1 and p.max() <= 1


def test_box_to_mask_examples():
    assert box_to_mask(RegionBox(0, 0, 4, 4), (8, 8)).sum() == 16
    assert np.all(box_to_mask(RegionBox(0, 0, 8, 8), (8, 8)) == 1)
    m = box_to_mask(RegionBox(2, 3, 5, 7), (16, 16))
    assert m.sum() == 12
    assert m.shape == (1, 16, 16)
    assert set(np.unique(m)) <= {0.0, 1.0}
    with pytest.raises(BoundsError):
        box_to_mask(RegionBox(4, 4, 9, 6), (8, 8))


def test_region_box_validation():
    with pytest.raises(BoundsError):
        RegionBox(3, 0, 3, 4)
    with pytest.raises(BoundsError):
        RegionBox(-1, 0, 3, 4)
    with pytest.raises(BoundsError):
        RegionBox(0, 0, 3, 3).check_generative((8, 8))


@st.composite
def boxes(draw):
    h = draw(st.integers(1, 64))
    w = draw(st.integers(1, 64))
    x0 = draw(st.integers(0, w - 1))
    y0 = draw(st.integers(0, h - 1))
    x1 = draw(st.integers(x0 + 1, w))
    y1 = draw(st.integers(y0 + 1, h))
    return RegionBox(x0, y0, x1, y1), (h, w)


@given(boxes())
def test_mask_box_duality(case):
    box, size = case
    mask = box_to_mask(box, size)
    assert mask.sum() == box.area
    assert mask_to_box(mask) == box


def test_dataset_round_trip(tmp_path):
    records = synth_dataset(5, 10, (64, 64))
    save_dataset(records, tmp_path / "d", seed=5)
    loaded = load_dataset(tmp_path / "d")
    assert len(loaded) == 10
    for a, b in zip(records, loaded):
        assert a.boxes == b.boxes
        assert a.domain == b.domain
        assert np.abs(a.image - b.image).max() <= 1 / 255 + 1e-7
    # quantization happens once
    save_dataset(loaded, tmp_path / "e", seed=5)
    again = load_dataset(tmp_path / "e")
    for a, b in zip(loaded, again):
        assert np.array_equal(a.image, b.image)
    for name in ("images/000003.png", "labels/000003.txt", "manifest.txt"):
        assert (tmp_path / "d" / name).read_bytes() == (tmp_path / "e" / name).read_bytes()
    man = read_manifest(tmp_path / "d")
    assert (man["count"], man["height"], man["width"], man["seed"]) == ("10", "64", "64", "5")


def test_label_format(tmp_path):
    rec = SceneRecord(np.zeros((3, 32, 32), np.float32), [RegionBox(0, 0, 16, 8)], FIRE)
    save_dataset([rec], tmp_path)
    assert (tmp_path / "labels" / "000000.txt").read_text() == "0 0.250000 0.125000 0.500000 0.250000\n"


def test_empty_directory_loads_empty(tmp_path):
    assert load_dataset(tmp_path) == []


def test_malformed_label_names_file_and_line(tmp_path):
    save_dataset(synth_dataset(1, 2, (32, 32)), tmp_path)
    bad = tmp_path / "labels" / "000001.txt"
    bad.write_text(bad.read_text() + "0 0.5 0.5\n")
    with pytest.raises(ParseError) as err:
        load_dataset(tmp_path)
    assert "000001.txt" in str(err.value)
    assert err.value.line_no == 2
