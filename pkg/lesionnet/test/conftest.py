"""
Shared fixtures: a tiny architecture that runs in milliseconds and small synthetic datasets.
"""

import numpy as np
import pytest

from lesionnet.datapipe import ArrayDataset, write_shapes_dataset
from lesionnet.model import ArchConfig, DenseNet


@pytest.fixture
def tiny_arch() -> ArchConfig:
    return ArchConfig(block_sizes=(1, 2), growth_rate=4, input_size=32, freeze_boundary=None)


@pytest.fixture
def frozen_arch() -> ArchConfig:
    """Same as ``tiny_arch`` with everything before ``concat_3_1`` frozen."""
    return ArchConfig(block_sizes=(1, 2), growth_rate=4, input_size=32, freeze_boundary=(2, 1))


@pytest.fixture
def tiny_model(tiny_arch) -> DenseNet:
    return DenseNet(tiny_arch, seed=0)


@pytest.fixture
def image_dataset() -> ArrayDataset:
    """14 random 3×32×32 inputs, two per class."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(14, 3, 32, 32)).astype(np.float32)
    labels = np.repeat(np.arange(7), 2)
    return ArrayDataset(x, labels)


@pytest.fixture
def shapes_root(tmp_path):
    """Five raw shape images per class and their ground-truth file."""
    return write_shapes_dataset(tmp_path / "src", per_class=5, size=(24, 32), seed=0)
