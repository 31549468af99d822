"""Shared fixtures: session-cached weight sets and helper RNG streams."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mrec.numerics import splitmix64, uniform_from_bits
from mrec.profiles import profile_by_name
from mrec.weights import WeightSet

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

GOLDEN_DIR = Path(__file__).parent / "golden"


def rand(seed: int, *shape: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Deterministic uniform array for test inputs."""
    n = int(np.prod(shape)) if shape else 1
    u = uniform_from_bits(splitmix64(seed, n))
    return (low + (high - low) * u).reshape(shape)


@pytest.fixture(scope="session")
def ws_toy() -> WeightSet:
    return WeightSet.generate(profile_by_name("toy"), 0)


@pytest.fixture(scope="session")
def ws_toy_single() -> WeightSet:
    return WeightSet.generate(profile_by_name("toy-single"), 0)


@pytest.fixture(scope="session")
def ws_paper() -> WeightSet:
    return WeightSet.generate(profile_by_name("paper"), 0)


@pytest.fixture(scope="session")
def ws_zero() -> WeightSet:
    return WeightSet.zeros(profile_by_name("toy"))
