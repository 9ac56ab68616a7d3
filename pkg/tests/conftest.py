import math

import numpy as np
import pytest

from pilotloc.scene import ArrayConfig, DroneTruth, FrameConfig, GainPhaseModel, SceneConfig


def drone(az_deg, el_deg, fd, **kw):
    return DroneTruth(math.radians(az_deg), math.radians(el_deg), fd, **kw)


@pytest.fixture
def small_array():
    return ArrayConfig(4, 4)


@pytest.fixture
def two_drone_scene(small_array):
    return SceneConfig(small_array, (drone(20, 20, 2000.0), drone(60, 60, 6000.0)))


@pytest.fixture
def one_drone_scene(small_array):
    return SceneConfig(small_array, (drone(40, 40, 4000.0),))


@pytest.fixture
def defects():
    return GainPhaseModel.stochastic(1.0, 0.1, 50.0)


@pytest.fixture
def short_frame():
    return FrameConfig(subframes=3, symbols_per_subframe=4, psk_order=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
