import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from spectral_core import SampledSeries, equispaced_nodes  # noqa: E402


def two_tone(x: np.ndarray) -> np.ndarray:
    """Band-limited test signal: two sinusoids well inside |k| < 16"""
    return np.sin(2 * np.pi * 3 * x) + 0.5 * np.cos(2 * np.pi * 7 * x + 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def equispaced_series():
    nodes = equispaced_nodes(64)
    return SampledSeries(nodes=nodes, values=10.0 + two_tone(nodes))


@pytest.fixture
def random_series(rng):
    nodes = np.sort(rng.uniform(-0.5, 0.5, 48))
    return SampledSeries(nodes=nodes, values=two_tone(nodes) + 0.05 * rng.standard_normal(48))


@pytest.fixture
def gapped_series():
    """Regular 128-point grid with a block of 20 slots removed"""
    nodes = equispaced_nodes(128)
    keep = np.r_[0:50, 70:128]
    return SampledSeries(nodes=nodes[keep], values=5.0 + two_tone(nodes[keep]))
