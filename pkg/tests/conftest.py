import numpy as np
import pytest
from hypothesis import settings

from irs_ofdm.channel import ChannelSet

# numba compilation and the CPU-bound examples make per-example timing meaningless
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")


def random_channels(rng, M, N, K, C, scale=1.0):
    def cn(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return ChannelSet(cn(M, K, C), cn(M, N, C), cn(N, K, C))


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, collected by test_acceptance.report()
    import sys

    module = sys.modules.get("test_acceptance")
    if module is not None and module.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.REPORT):
            terminalreporter.write_line(line)
