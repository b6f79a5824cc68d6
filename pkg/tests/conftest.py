import os

import numpy as np
import pytest

from evstu.events import Frame

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")
VIDEO40_DIR = os.path.join(FIXTURE_DIR, "video40")
SCORES_PATH = os.path.join(FIXTURE_DIR, "scores.json")
CONFIG_PATH = os.path.join(FIXTURE_DIR, "config.json")


def make_frame(index, values):
    """Frame from a nested list or array of intensities."""
    return Frame(index=index, pixels=np.asarray(values, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
