"""Shared pytest fixtures and the --runslow switch."""

import numpy as np
import pytest

from bagio import Bag, RegionAnnotation, SynthSpec


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow benchmark tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running learnability benchmark")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_bag(rng):
    coords = np.array([(s, t) for s in range(3) for t in range(4)], dtype=np.int64)
    features = rng.normal(size=(12, 6)).astype(np.float32)
    return Bag(
        bag_id="tiny",
        grade=2,
        coords=coords,
        features=features,
        num_classes=4,
        annotations=[RegionAnnotation("tiny_r0", (0, 1, 4), 2)],
    )


@pytest.fixture
def small_spec():
    return SynthSpec(class_counts=(8, 6, 5, 5), min_patches=10, max_patches=16, feature_dim=8)
