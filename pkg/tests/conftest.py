import numpy as np
import pytest

from rta_ofdma.core import DEFAULT_SLOT, RngStreams

T = DEFAULT_SLOT


class ScriptedRng:
    """Generator stand-in whose ``integers`` returns scripted offsets.

    ``random`` and ``exponential`` are deliberately absent so a test fails
    loudly if a stream is used for something it was not scripted for.
    """

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def integers(self, low, high=None):
        if high is None:
            low, high = 0, low
        if not self.script:
            raise AssertionError(f"unscripted draw in [{low}, {high})")
        v = self.script.pop(0)
        assert 0 <= v < high - low, (v, low, high)
        self.calls.append((low, high, v))
        return low + v


def scripted_streams(n_stas, scheduler=(), choices=()):
    """Streams for a noiseless run with pinned scheduler and RU choices."""
    return RngStreams(
        channel=np.random.default_rng(0),
        choices=ScriptedRng(choices),
        scheduler=ScriptedRng(scheduler),
        arrivals=tuple(np.random.default_rng(i) for i in range(n_stas)),
    )


def in_slot_zero(stas):
    """One packet per listed STA, arriving early in the first slot interval."""
    return {s: [0.0] for s in stas}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail=""):
    """Remember one pass/fail line for the end-of-run acceptance summary."""
    line = f"{'PASS' if passed else 'FAIL'}  {criterion}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
