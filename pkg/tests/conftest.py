"""Shared fixtures: small, fast study configurations for the unit tests."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for the oracles helper module

from slicegof.config import StudyConfig
from slicegof.pointproc import ProcessSpec


@pytest.fixture(scope="session")
def default_cfg() -> StudyConfig:
    """The full-size null configuration."""
    return StudyConfig()


@pytest.fixture(scope="session")
def small_cfg() -> StudyConfig:
    """A scaled-down configuration for fast pipeline tests (~60 points)."""
    return StudyConfig(
        window_side=60.0,
        window_height=30.0,
        process=ProcessSpec(intensity=1.5e-3),
        slice_count=5,
        slice_spacing=4.0,
        M=15.0,
        tau=15.0,
        r_rip=4.0,
        r_grid=128,
        replications=20,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
