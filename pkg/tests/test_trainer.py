import dataclasses

import numpy as np
import pytest
import torch

from conftest import tiny_config
from scu_cgan.errors import ConfigurationError, TrainingDivergenceError
from scu_cgan.losses import LossWeights
from scu_cgan.ops import param_hash
from scu_cgan.trainer import (ABLATION_HEADER, VARIANTS, FlameConfig, TrainConfig, batch_for_step,
                              flame_patch_dataset, init_state, load_checkpoint, load_generator,
                              pretrain_flame_lsgan, run_ablation, save_checkpoint, train, train_step,
                              translate_nonfire)


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(lr_g=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(variant="pix2pix")
    with pytest.raises(ConfigurationError):
        TrainConfig.from_kv({"bogus": "1"})


def test_train_config_kv_round_trip():
    cfg = TrainConfig(seed=9, widths=(8, 16), weights=LossWeights(lambda_bg=1e4), adv_form="log")
    from scu_cgan.checkpoint import format_value
    again = TrainConfig.from_kv({k: format_value(v) for k, v in cfg.to_kv().items()})
    assert again == cfg


def test_flame_pretrain_deterministic_and_frozen():
    patches = flame_patch_dataset(64, 3)
    a = pretrain_flame_lsgan(patches, FlameConfig(seed=3, epochs=2))
    b = pretrain_flame_lsgan(patches, FlameConfig(seed=3, epochs=2))
    assert param_hash(a) == param_hash(b)
    assert a.frozen and not a.training
    with pytest.raises(ConfigurationError):
        pretrain_flame_lsgan(patches[:8])


def test_flame_discriminator_real_loss_decreases():
    hist = []
    pretrain_flame_lsgan(flame_patch_dataset(64, 0), FlameConfig(seed=0, epochs=26), history=hist)
    assert len(hist) >= 201
    assert hist[200]["d_real"] < hist[0]["d_real"]


def test_translation_needs_frozen_flame():
    from scu_cgan.generator import FlameGenerator
    with pytest.raises(ConfigurationError):
        init_state(tiny_config())
    with pytest.raises(ConfigurationError):
        init_state(tiny_config(), FlameGenerator())


def _run(cfg, records, flame, steps):
    nonfire, fire = records
    state = init_state(cfg, flame)
    out = []
    for s in range(steps):
        _, losses = train_step(batch_for_step(s, nonfire, fire, cfg), state)
        out.append(losses)
    return state, out


def test_train_step_deterministic(tiny_records, tiny_flame):
    cfg = tiny_config(batch_size=2)
    s1, a = _run(cfg, tiny_records, tiny_flame, 2)
    s2, b = _run(cfg, tiny_records, tiny_flame, 2)
    assert a == b
    assert s1.hash() == s2.hash()


@pytest.mark.parametrize("variant", VARIANTS)
def test_variant_gating(variant, tiny_records, tiny_flame):
    cfg = tiny_config(variant=variant, batch_size=2)
    flame_hash = param_hash(tiny_flame)
    state, hist = _run(cfg, tiny_records, tiny_flame, 2)
    spec = cfg.spec
    for h in hist:
        vals = dataclasses.asdict(h)
        assert all(np.isfinite(v) for v in vals.values())
        if not spec.region_losses:
            assert h.tr_g == 0.0 and h.tr_d == 0.0 and h.bg == 0.0
            assert "d_fr" not in state.models
        else:
            assert h.tr_g > 0 and h.tr_d > 0 and h.bg > 0
        if not spec.translation:
            assert h.cyc == 0.0 and h.id == 0.0
    assert param_hash(tiny_flame) == flame_hash


def test_divergence_guard(tiny_records, tiny_flame):
    cfg = tiny_config(weights=LossWeights(lambda_cyc=1e9))
    state = init_state(cfg, tiny_flame)
    with pytest.raises(TrainingDivergenceError) as err:
        train_step(batch_for_step(0, *tiny_records, cfg), state)
    assert err.value.step == 0
    assert err.value.component == "total_g"


def test_checkpoint_round_trip(tmp_path, tiny_records, tiny_flame):
    cfg = tiny_config(max_steps=2)
    state, _ = train(cfg, *tiny_records, out_dir=tmp_path / "run", flame=tiny_flame)
    loaded = load_checkpoint(tmp_path / "run" / "checkpoint")
    assert loaded.step == state.step
    assert loaded.hash() == state.hash()
    save_checkpoint(loaded, tmp_path / "again")
    a, b = tmp_path / "run" / "checkpoint", tmp_path / "again"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    gen, flame, cfg2 = load_generator(tmp_path / "run" / "checkpoint")
    rec = tiny_records[0][0]
    x = translate_nonfire(gen, flame, rec.image, rec.target_box, seed=1)
    y = translate_nonfire(state.models["g_nf2f"], state.flame, rec.image, rec.target_box, seed=1)
    assert np.array_equal(x, y)
    assert x.shape == rec.image.shape and np.abs(x).max() <= 1


def test_resume_matches_uninterrupted(tmp_path, tiny_records, tiny_flame):
    full, _ = train(tiny_config(max_steps=4), *tiny_records, flame=tiny_flame)
    train(tiny_config(max_steps=3, checkpoint_every=3), *tiny_records, out_dir=tmp_path / "a", flame=tiny_flame)
    resumed, _ = train(tiny_config(max_steps=4), *tiny_records, out_dir=tmp_path / "a",
                       resume_from=tmp_path / "a" / "checkpoint_000003")
    assert resumed.step == full.step == 4
    assert resumed.hash() == full.hash()
    assert len((tmp_path / "a" / "losses.csv").read_text().splitlines()) == 1 + 4


def test_losses_csv(tmp_path, tiny_records, tiny_flame):
    train(tiny_config(max_steps=2), *tiny_records, out_dir=tmp_path, flame=tiny_flame)
    lines = (tmp_path / "losses.csv").read_text().splitlines()
    assert lines[0] == "step,adv_g,adv_d,cyc,id,tr_g,tr_d,bg,total_g,total_d"
    assert [l.split(",")[0] for l in lines[1:]] == ["0", "1"]


def test_ablation_rows(tmp_path, tiny_records, tiny_flame):
    from scu_cgan.metrics import FeatureExtractor
    rows = run_ablation(tiny_config(max_steps=1), *tiny_records, flame=tiny_flame, out_dir=tmp_path,
                        extractor=FeatureExtractor(dim=8, widths=(4, 8, 8)))
    assert [r.variant for r in rows] == list(VARIANTS)
    lines = (tmp_path / "ablation_report.csv").read_text().splitlines()
    assert lines[0] == ABLATION_HEADER
    assert len(lines) == 7
    assert lines[1].startswith("lsgan_only,") and lines[1].endswith(",")
    for line in lines[2:]:
        assert all(np.isfinite(float(c)) for c in line.split(",")[1:])
