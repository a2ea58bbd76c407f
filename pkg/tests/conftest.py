import numpy as np
import pytest

from skna_denoise.dsp import BASELINE, STIMULATION, Period, SampledSignal


def sine(freq, fs, seconds, amp=1.0):
    t = np.arange(int(round(seconds * fs))) / fs
    return amp * np.sin(2 * np.pi * freq * t)


def steady_amplitude(x, fs, freq, margin_s=0.5):
    """Least-squares amplitude of a sinusoid at ``freq`` away from the edges."""
    m = int(margin_s * fs)
    y = x[m:-m]
    t = np.arange(m, m + y.size) / fs
    A = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.hypot(*coef))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_period_signal(rng):
    """6 s baseline + 8 s stimulation of white noise at 2048 Hz."""
    fs = 2048.0
    n0, n1 = 6 * 2048, 8 * 2048
    x = rng.standard_normal(n0 + n1)
    return SampledSignal(x, fs, [Period(0, n0, BASELINE), Period(n0, n0 + n1, STIMULATION)])


_CRITERIA: dict = {}


def record_criterion(n: int, line: str) -> None:
    _CRITERIA[n] = line


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
