"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in RESULTS and repeated in the pytest terminal
summary, so `pytest tests/test_acceptance.py` ends with a per-criterion table.
"""

import contextlib
import dataclasses
import time

import numpy as np
import pytest
import torch
import torch.nn as nn

from oracles import ap_bruteforce, gradcheck_input, gradcheck_params, mmd2_unbiased
from scu_cgan.augment import mix_counts, provenance_counts
from scu_cgan.cli import main
from scu_cgan.data import FIRE, NON_FIRE, RegionBox, box_to_mask, load_dataset, synth_dataset
from scu_cgan.discriminators import PatchDiscriminator, RegionDiscriminator
from scu_cgan.generator import CBAM, UNetGenerator, cbam, count_cbam_groups, generator_forward, skip_fuse
from scu_cgan.losses import (LossWeights, adversarial_log, adversarial_ls, background_loss, cycle_loss,
                             identity_loss, target_region_loss_d, target_region_loss_g)
from scu_cgan.metrics import (Detection, GroundTruth, average_precision, frechet_distance,
                              kid_from_features, precision, recall)
from scu_cgan.ops import param_hash
from scu_cgan.trainer import (ABLATION_HEADER, VARIANTS, FlameConfig, TrainConfig, batch_for_step,
                              flame_patch_dataset, init_state, pretrain_flame_lsgan, run_ablation,
                              split_records, train, train_step)

RESULTS = []


@contextlib.contextmanager
def criterion(name):
    start = time.perf_counter()
    notes = {}
    try:
        yield notes
    except BaseException as exc:
        line = f"FAIL  {name} ({time.perf_counter() - start:.1f}s): {type(exc).__name__}: {exc}"
        RESULTS.append(line)
        print(line)
        raise
    detail = ", ".join(f"{k}={v}" for k, v in notes.items())
    line = f"PASS  {name} ({time.perf_counter() - start:.1f}s){': ' + detail if detail else ''}"
    RESULTS.append(line)
    print(line)


def _dir_bytes(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def flame():
    return pretrain_flame_lsgan(flame_patch_dataset(64, 0), FlameConfig(seed=0, epochs=25))


@pytest.fixture(scope="module")
def desk_data():
    return split_records(synth_dataset(0, 32, (64, 64)))


# ----------------------------------------------------------------------------

def test_published_scale_substitution():
    # absolute published FID/KID and detector numbers need Inception, SDXL data and YOLOv5;
    # the suite checks the report shapes the substitutes must produce instead
    with criterion("published-scale numbers substituted by oracle/property acceptance") as n:
        assert ABLATION_HEADER.split(",") == ["variant", "fid", "kid", "perceptual", "iou"]
        assert len(VARIANTS) == 6
        n["ablation_columns"] = 4
        n["detection_columns"] = "precision,recall,map50,map5095"


def test_metric_oracles():
    with criterion("metric oracles (frechet 1-D, kid brute force, AP brute force, < 10 s)") as n:
        t0 = time.perf_counter()
        rng = np.random.default_rng(100)
        worst = 0.0
        for _ in range(100):
            m1, m2 = rng.normal(size=2) * 3
            s1, s2 = rng.uniform(0.01, 5, 2)
            got = frechet_distance([m1], [[s1 ** 2]], [m2], [[s2 ** 2]])
            worst = max(worst, abs(got - ((m1 - m2) ** 2 + (s1 - s2) ** 2)))
        assert worst < 1e-9
        n["frechet_err"] = f"{worst:.1e}"

        worst = 0.0
        for _ in range(50):
            a, b, d = (int(v) for v in rng.integers(2, 11, 3))
            x, y = rng.normal(size=(a, d)), rng.normal(size=(b, d))
            worst = max(worst, abs(kid_from_features(x, y) - mmd2_unbiased(x.tolist(), y.tolist())))
        assert worst < 1e-12
        n["kid_err"] = f"{worst:.1e}"

        worst = 0.0
        for _ in range(50):
            n_img = int(rng.integers(1, 3))
            gts = []
            for _ in range(int(rng.integers(0, 6))):
                x0, y0 = rng.integers(0, 12, 2)
                gts.append((str(int(rng.integers(n_img))),
                            (float(x0), float(y0), float(x0 + rng.integers(2, 8)), float(y0 + rng.integers(2, 8)))))
            dets = []
            for _ in range(int(rng.integers(0, 6))):
                if gts and rng.random() < 0.7:
                    img, bx = gts[int(rng.integers(len(gts)))]
                    bx = tuple(v + float(rng.integers(-2, 3)) for v in bx)
                    if bx[2] <= bx[0] or bx[3] <= bx[1]:
                        bx = (bx[0], bx[1], bx[0] + 1, bx[1] + 1)
                else:
                    img = str(int(rng.integers(n_img)))
                    x0, y0 = rng.integers(0, 12, 2)
                    bx = (float(x0), float(y0), float(x0 + rng.integers(2, 8)), float(y0 + rng.integers(2, 8)))
                dets.append((img, bx, float(rng.integers(1, 6)) / 5))
            got = average_precision([Detection(*d) for d in dets], [GroundTruth(*g) for g in gts], 0.5)
            worst = max(worst, abs(got - ap_bruteforce(dets, gts, 0.5)))
        assert worst < 1e-9
        n["ap_err"] = f"{worst:.1e}"
        elapsed = time.perf_counter() - t0
        assert elapsed < 10
        n["runtime_s"] = f"{elapsed:.2f}"


def test_loss_and_metric_fidelity():
    with criterion("background loss / precision-recall / skip fusion fidelity") as n:
        rng = np.random.default_rng(200)
        worst = inv = 0.0
        for _ in range(100):
            h, w = (int(v) for v in rng.integers(2, 12, 2))
            x0, y0 = int(rng.integers(0, w)), int(rng.integers(0, h))
            box = RegionBox(x0, y0, int(rng.integers(x0 + 1, w + 1)), int(rng.integers(y0 + 1, h + 1)))
            g, o = rng.uniform(-1, 1, (3, h, w)), rng.uniform(-1, 1, (3, h, w))
            m = box_to_mask(box, (h, w)).astype(np.float64)
            want = np.mean([abs((1 - m[0, y, x]) * g[c, y, x] - (1 - m[0, y, x]) * o[c, y, x])
                            for c in range(3) for y in range(h) for x in range(w)])
            got = background_loss(torch.from_numpy(g), torch.from_numpy(o), m).item()
            worst = max(worst, abs(got - want))
            g2 = g.copy()
            g2[:, box.y_min:box.y_max, box.x_min:box.x_max] = rng.normal(size=(3, box.height, box.width))
            inv = max(inv, abs(background_loss(torch.from_numpy(g2), torch.from_numpy(o), m).item() - got))
        assert worst < 1e-12 and inv < 1e-12
        n["bg_err"] = f"{worst:.1e}"

        for tp in range(11):
            for fp in range(11):
                for fn in range(11):
                    assert precision(tp, fp) == (tp / (tp + fp) if tp + fp else 0.0)
                    assert recall(tp, fn) == (tp / (tp + fn) if tp + fn else 0.0)
        n["pr_triples"] = 11 ** 3

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(0)
            ea, da = CBAM(4, 2).double(), CBAM(4, 2).double()
            dec = nn.ConvTranspose2d(8, 3, 4, 2, 1).double()
        fe = torch.randn(1, 4, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        fd = torch.randn(1, 4, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        # compose the attention by hand: channel weights, then spatial map
        def attn(mod, f):
            ca = torch.sigmoid(mod.channel.mlp(f.mean((2, 3))) + mod.channel.mlp(f.amax((2, 3))))
            fc = f * ca[:, :, None, None]
            pooled = torch.cat([fc.mean(1, keepdim=True), fc.amax(1, keepdim=True)], 1)
            return fc * torch.sigmoid(mod.spatial.conv(pooled))
        want = dec(torch.cat([attn(ea, fe), attn(da, fd)], 1))
        err = (skip_fuse(fe, fd, dec, ea, da) - want).abs().max().item()
        assert err < 1e-6
        n["skip_fuse_err"] = f"{err:.1e}"


def test_gradient_checks():
    with criterion("gradient checks (cbam, generator, both discriminators, every loss; < 60 s)") as n:
        t0 = time.perf_counter()
        gen = torch.Generator().manual_seed(300)
        errs, st = {}, {}
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(300)
            c = CBAM(4, 2, 3).double()
            g = UNetGenerator(widths=(4, 8), reduction=2, attn_kernel=3).double()
            pd = PatchDiscriminator(widths=(4, 8, 8)).double()
            rd = RegionDiscriminator(widths=(4, 8, 8), crop_size=16).double()
        x = torch.randn(2, 4, 5, 5, dtype=torch.float64, generator=gen)
        w = torch.randn(2, 4, 5, 5, dtype=torch.float64, generator=gen)
        errs["cbam_params"] = gradcheck_params(lambda: (cbam(x, c) * w).sum(), list(c.named_parameters()), watch=c, stats=st)
        errs["cbam_input"] = gradcheck_input(lambda t: (c(t) * w).sum(), x, watch=c, stats=st)

        x6 = torch.rand(1, 6, 8, 8, dtype=torch.float64, generator=gen) * 2 - 1
        tgt = torch.rand(1, 3, 8, 8, dtype=torch.float64, generator=gen) * 2 - 1
        errs["generator"] = gradcheck_params(lambda: ((generator_forward(x6, g) - tgt) ** 2).mean(),
                                             list(g.named_parameters()), watch=g, stats=st)
        img = torch.rand(2, 3, 16, 16, dtype=torch.float64, generator=gen)
        errs["patchgan"] = gradcheck_params(lambda: ((pd(img) - 1) ** 2).mean(), list(pd.named_parameters()),
                                            watch=pd, stats=st)
        errs["patchgan_input"] = gradcheck_input(lambda t: ((pd(t) - 1) ** 2).mean(), img, watch=pd, stats=st)
        errs["region"] = gradcheck_params(lambda: (rd(img) ** 2).mean(), list(rd.named_parameters()), watch=rd, stats=st)
        errs["region_input"] = gradcheck_input(lambda t: (rd(t) ** 2).mean(), img, watch=rd, stats=st)

        a = torch.randn(3, 6, 6, dtype=torch.float64, generator=gen)
        o = torch.randn(3, 6, 6, dtype=torch.float64, generator=gen)
        s = torch.randn(8, dtype=torch.float64, generator=gen)
        real = torch.randn(8, dtype=torch.float64, generator=gen)
        m = box_to_mask(RegionBox(1, 2, 4, 5), (6, 6)).astype(np.float64)
        for name, fn, inp in [
            ("adv_ls", lambda t: adversarial_ls(t, 1.0), s),
            ("adv_log", lambda t: adversarial_log(t, 1.0), s),
            ("tr_d", lambda t: target_region_loss_d(real, t), s),
            ("tr_g", lambda t: target_region_loss_g(t), s),
            ("bg", lambda t: background_loss(t, o, m), a),
            ("cyc", lambda t: cycle_loss(t, o), a),
            ("id", lambda t: identity_loss(t, o), a),
        ]:
            errs[name] = gradcheck_input(fn, inp)
        worst = max(errs.values())
        assert worst < 1e-4, errs
        elapsed = time.perf_counter() - t0
        assert elapsed < 60
        n["max_rel_err"] = f"{worst:.1e}"
        n["kink_samples_redrawn"] = st.get("skipped", 0)
        n["runtime_s"] = f"{elapsed:.1f}"


def test_architecture_invariants(flame, desk_data):
    with criterion("architecture invariants (6 CBAM groups, shape/range, frozen flame over 100 steps)") as n:
        g = UNetGenerator()
        assert count_cbam_groups(g) == 6
        for hw in (32, 64, 128):
            y = generator_forward(torch.rand(6, hw, hw) * 2 - 1, g)
            assert y.shape == (3, hw, hw) and y.abs().max() <= 1
        before = param_hash(flame)
        cfg = TrainConfig(seed=0, resolution=64, max_steps=100)
        state = init_state(cfg, flame)
        nonfire, fire = desk_data
        for step in range(100):
            train_step(batch_for_step(step, nonfire, fire, cfg), state)
        assert state.step == 100
        assert param_hash(flame) == before
        n["flame_hash"] = before[:12]


def test_desk_training(flame, desk_data):
    with criterion("desk-scale training (64x64, finite losses, bg decreases at lambda_bg=1e4, variant gating)") as n:
        nonfire, fire = desk_data
        t0 = time.perf_counter()
        _, hist = train(TrainConfig(seed=0, epochs=100, max_steps=200), nonfire, fire, flame=flame)
        assert len(hist) == 200
        assert all(np.isfinite(v) for h in hist for v in dataclasses.asdict(h).values())
        cfg = TrainConfig(seed=0, epochs=100, max_steps=200, weights=LossWeights(lambda_bg=1e4))
        _, hist_bg = train(cfg, nonfire, fire, flame=flame)
        assert len(hist_bg) == 200
        assert all(np.isfinite(v) for h in hist_bg for v in dataclasses.asdict(h).values())
        assert hist_bg[-1].bg < hist_bg[0].bg
        n["steps"] = len(hist_bg)
        n["bg_step0"] = f"{hist_bg[0].bg:.4f}"
        n["bg_final"] = f"{hist_bg[-1].bg:.4f}"
        for variant in VARIANTS:
            vcfg = TrainConfig(seed=0, variant=variant, max_steps=3)
            state, vh = train(vcfg, nonfire, fire, flame=flame)
            if not vcfg.spec.region_losses:
                assert all(h.tr_g == 0.0 and h.tr_d == 0.0 and h.bg == 0.0 for h in vh), variant
                assert not {"d_fr", "d_nfr"} & set(state.models)
            if not vcfg.spec.translation:
                assert all(h.cyc == 0.0 and h.id == 0.0 for h in vh), variant
        elapsed = time.perf_counter() - t0
        assert elapsed < 15 * 60
        n["runtime_s"] = f"{elapsed:.0f}"


def test_ablation_harness(flame, desk_data, tmp_path):
    with criterion("ablation harness (six rows in order, lsgan_only IoU absent, other cells finite)") as n:
        nonfire, fire = desk_data
        rows = run_ablation(TrainConfig(seed=0, epochs=10, max_steps=40), nonfire, fire, flame=flame, out_dir=tmp_path)
        lines = (tmp_path / "ablation_report.csv").read_text().splitlines()
        assert lines[0] == "variant,fid,kid,perceptual,iou"
        cells = [l.split(",") for l in lines[1:]]
        assert [c[0] for c in cells] == list(VARIANTS)
        assert cells[0][4] == "" and rows[0].report.iou is None
        for c in cells[0][1:4] + [v for row in cells[1:] for v in row[1:]]:
            assert np.isfinite(float(c))
        n["rows"] = len(cells)


def test_augmentation_smoke(tmp_path):
    with criterion("end-to-end augmentation smoke (synth 200 -> train -> generate 200 -> mix 1:5 -> toy detector)") as n:
        t0 = time.perf_counter()
        d, t, g, m, r = (str(tmp_path / k) for k in ("data", "train", "gen", "mix", "report"))
        assert main(["synth", "--seed", "0", "--count", "200", "--size", "64", "--out", d]) == 0
        assert main(["synth", "--seed", "1", "--count", "40", "--size", "64", "--domain", "both",
                     "--out", str(tmp_path / "test")]) == 0
        assert main(["train", "--data", d, "--out", t, "--max-steps", "60", "--seed", "0"]) == 0
        assert main(["generate", "--source", d, "--checkpoint", t + "/checkpoint", "--count", "200",
                     "--seed", "0", "--out", g]) == 0
        src = {i: rec.target_box for i, rec in enumerate(load_dataset(d)) if rec.domain == NON_FIRE}
        generated = load_dataset(g)
        assert len(generated) == 200
        src_boxes = set(src.values())
        order = np.random.default_rng([0, 0xA1]).permutation(len(src))
        pool = [src[k] for k in sorted(src)]
        for i, rec in enumerate(generated):
            assert rec.boxes == [pool[order[i % len(pool)]]] and rec.boxes[0] in src_boxes
        n["labels_exact"] = len(generated)

        # originals: the fire half of the synth set
        orig = tmp_path / "orig"
        from scu_cgan.data import save_dataset
        save_dataset([rec for rec in load_dataset(d) if rec.domain == FIRE], orig, seed=0)
        assert main(["mix", "--original", str(orig), "--generated", g, "--ratio", "1:5", "--out", m]) == 0
        counts = provenance_counts(m)
        want_o, want_g = mix_counts(100, 200, (1, 5))
        assert counts == {"original": want_o, "generated": want_g}
        n["mix"] = f"{want_o}+{want_g}"
        assert main(["detect-smoke", "--baseline", str(orig), "--augmented", m, "--test", str(tmp_path / "test"),
                     "--out", r]) == 0
        lines = (tmp_path / "report" / "detection_report.csv").read_text().splitlines()
        assert lines[0] == "model,precision,recall,map50,map5095"
        assert [l.split(",")[0] for l in lines[1:]] == ["baseline", "augmented"]
        for line in lines[1:]:
            assert all(np.isfinite(float(v)) for v in line.split(",")[1:])
        n["report"] = " | ".join(lines[1:])
        elapsed = time.perf_counter() - t0
        assert elapsed < 30 * 60
        n["runtime_s"] = f"{elapsed:.0f}"


def test_determinism(tmp_path):
    with criterion("determinism (synth, train, generate byte-identical across runs)") as n:
        import shutil

        root = tmp_path / "run"
        snapshots = []
        for _ in range(2):
            # same --out paths each time, cleared between runs
            shutil.rmtree(root, ignore_errors=True)
            assert main(["synth", "--seed", "3", "--count", "16", "--size", "64", "--out", str(root / "data")]) == 0
            assert main(["train", "--seed", "3", "--data", str(root / "data"), "--out", str(root / "train"),
                         "--max-steps", "5", "--flame-epochs", "2"]) == 0
            assert main(["generate", "--seed", "3", "--source", str(root / "data"), "--checkpoint",
                         str(root / "train" / "checkpoint"), "--count", "8", "--out", str(root / "gen")]) == 0
            snapshots.append({part: _dir_bytes(root / part) for part in ("data", "train", "gen")})
        for part in ("data", "train", "gen"):
            a, b = snapshots[0][part], snapshots[1][part]
            assert a.keys() == b.keys() and a == b, part
            n[part + "_files"] = len(a)
