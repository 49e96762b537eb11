import functools

import pytest

from spikecap.capacity_solver import (
    DEFAULT_A0,
    DEFAULT_B0,
    DEFAULT_DELTA,
    grid_capacity,
    particle_capacity,
)
from spikecap.neuron_channel import CountChannelConfig, GammaChannel

KAPPAS = (1.0, 2.0, 3.0)
CODINGS = ("temporal", "rate")
MATRIX = [(k, c) for k in KAPPAS for c in CODINGS]


def default_channel(kappa, coding, a0=DEFAULT_A0, b0=DEFAULT_B0, delta=DEFAULT_DELTA):
    base = GammaChannel(kappa, a0, b0)
    return CountChannelConfig(base, delta) if coding == "rate" else base


@functools.lru_cache(maxsize=None)
def particle_solution(kappa, coding):
    return particle_capacity(default_channel(kappa, coding), coding)


@functools.lru_cache(maxsize=None)
def grid_solution(kappa, coding, grid_n=2001):
    # 1e-5 bracket: two orders below the 1e-3 agreement target
    return grid_capacity(default_channel(kappa, coding), coding, grid_n=grid_n, tol=1e-5,
                         certify=False)


@pytest.fixture(scope="session")
def solved():
    return particle_solution


@pytest.fixture(scope="session")
def gridded():
    return grid_solution
