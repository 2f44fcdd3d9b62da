import numpy as np
import pytest

from spherecox.geometry import build_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh4098():
    return build_grid(4098)


def mc_se(samples, axis=0):
    """Standard error of the mean along ``axis``."""
    samples = np.asarray(samples, dtype=float)
    return samples.std(axis=axis, ddof=1) / np.sqrt(samples.shape[axis])


_ACCEPTANCE = []


@pytest.fixture
def acceptance(capsys):
    """``report(label, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary.

    ``ok=None`` reports SKIP.
    """

    def report(label, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"ACCEPTANCE {label}: {status} {detail}".rstrip()
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
