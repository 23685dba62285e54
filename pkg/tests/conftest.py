import numpy as np
import pytest
import torch

from microinpaint import RectRegion, Rect, TrainingConfig, encode_onehot
from microinpaint.synth import synth_texture

TINY_CFG = TrainingConfig(
    i_max=12,
    batch_size=2,
    snapshot_every=5,
    g_widths=(16, 12, 8),
    d_widths=(8, 12, 16, 24),
)


@pytest.fixture(scope="session")
def texture_128():
    return synth_texture(size=128, blob_size=5.0, seed=7)


@pytest.fixture(scope="session")
def texture_192():
    return synth_texture(size=192, blob_size=6.0, seed=9)


@pytest.fixture(scope="session")
def texture_256():
    return synth_texture(size=256, blob_size=8.0, seed=11)


@pytest.fixture
def small_region():
    return RectRegion(Rect(40, 40, 32, 32))


@pytest.fixture
def tiny_cfg():
    return TINY_CFG


def random_nphase(height, width, n, seed=0):
    rng = np.random.default_rng(seed)
    return encode_onehot(rng.integers(0, n, size=(height, width)), n)


def torch_rng(seed=0):
    return torch.Generator().manual_seed(seed)
