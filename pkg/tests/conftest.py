import math

import numpy as np
import pytest
from hypothesis import settings

from chest_lab.channel import ChannelConfig, Path
from chest_lab.geometry import Direction, make_frequency_grid, make_ula

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FC = 28e9
LAM = 299_792_458.0 / FC


def make_cfg(n_t=4, n_r=2, n_f=3, spacing_hz=15e6, tx_axis=(1, 0, 0), rx_axis=(1, 0, 0)):
    return ChannelConfig(
        make_ula(n_t, 0.5, tx_axis, LAM),
        make_ula(n_r, 0.5, rx_axis, LAM),
        make_frequency_grid(FC, n_f, spacing_hz),
    )


def random_path(rng, t_max=50e-9, el_max=1.2):
    g = rng.uniform(0.3, 1.5) * np.exp(1j * rng.uniform(0, 2 * math.pi))
    return Path(
        complex(g),
        Direction(rng.uniform(0, 2 * math.pi), rng.uniform(-el_max, el_max)),
        Direction(rng.uniform(0, 2 * math.pi), rng.uniform(-el_max, el_max)),
        float(rng.uniform(0, t_max)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
