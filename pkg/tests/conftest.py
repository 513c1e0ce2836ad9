import numpy as np
import pytest

from egfnet import EGFNet, EncoderConfig
from egfnet.rng import Rng
from egfnet.tensor import Tensor

TINY_ENCODER = EncoderConfig(stem_channels=4, stage_widths=(4, 4, 8, 8, 8), reduced_channels=8)


@pytest.fixture
def tiny_net():
    return EGFNet(3, TINY_ENCODER).initialize(Rng(0))


@pytest.fixture
def image_pair():
    def make(n=1, size=64, seed=1):
        s = Rng(seed).stream("input")
        rgb = Tensor(s.uniform(n * 3 * size * size).reshape(n, 3, size, size))
        thermal = Tensor(s.uniform(n * size * size).reshape(n, 1, size, size))
        return rgb, thermal
    return make


def randn(shape, seed=0, tag="t", std=1.0):
    return Tensor(Rng(seed).stream(tag).normal(int(np.prod(shape)), std).reshape(shape))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
