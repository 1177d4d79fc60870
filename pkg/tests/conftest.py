"""Shared fixtures; puts src/ on the path the way the launcher does."""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

src_path = Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(src_path))

from models import Dataset, NetConfig  # noqa: E402


def pytest_collection_modifyitems(config, items):
    if os.getenv("SURVBAND_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow study; set SURVBAND_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_dataset():
    """Six records, two features, times 1..6 with two censored."""
    x = np.array([[0.5, 1.0], [-1.0, 0.0], [2.0, 1.0], [0.0, 0.0], [1.5, 1.0], [-0.5, 0.0]])
    time = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    event = np.array([1, 1, 0, 1, 0, 1], dtype=bool)
    return Dataset(x, time, event, ["a", "b"])


@pytest.fixture
def small_net_config():
    return NetConfig(hidden_layers=2, layer_width=8, dropout_rate=0.0, learning_rate=1e-2,
                     batch_size=32, max_epochs=15, patience=3, n_controls=4, seed=0)


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV in tmp_path and return its absolute path."""
    def _write(text: str, name: str = "data.csv") -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
