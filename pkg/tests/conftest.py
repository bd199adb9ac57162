import hypothesis
import numpy as np
import pytest
import torch

torch.set_num_threads(1)
np.seterr(all="warn")

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def tiny_flame():
    from scu_cgan.trainer import FlameConfig, flame_patch_dataset, pretrain_flame_lsgan

    return pretrain_flame_lsgan(flame_patch_dataset(32, 0), FlameConfig(seed=0, epochs=2))


@pytest.fixture(scope="session")
def tiny_records():
    from scu_cgan.data import synth_dataset
    from scu_cgan.trainer import split_records

    return split_records(synth_dataset(3, 8, (32, 32)))


def tiny_config(**kw):
    from scu_cgan.trainer import TrainConfig

    base = dict(resolution=32, widths=(8, 16, 32), disc_widths=(8, 16, 32), reduction=4,
                resnet_base=8, resnet_blocks=1, crop_size=16, lsgan_latent_dim=8, max_steps=3)
    base.update(kw)
    return TrainConfig(**base)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
