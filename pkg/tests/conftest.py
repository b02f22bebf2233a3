import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("glx", max_examples=40, deadline=None)
settings.load_profile("glx")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class WhiteNoiseSampler:
    """Identity-covariance sampler without a dense factor."""

    def __init__(self, size):
        self.size = size

    def block(self, seed, replicates):
        from glx.gaussian import white_noise

        return white_noise(seed, replicates, self.size)


@pytest.fixture
def white():
    return WhiteNoiseSampler


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
