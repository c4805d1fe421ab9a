import numpy as np
import pytest

from sdirecon.cube import FilterStack, PsfStack
from sdirecon.forward import SdiSystem

_ACCEPTANCE = []


def random_system(rng, h, w, bands, channels=1, k=3):
    psfs = PsfStack(rng.random((bands, k, k)) + 1e-3)
    filters = FilterStack(rng.random((channels, bands, h, w)))
    return SdiSystem(psfs, filters)


def delta_psfs(bands, k=3):
    d = np.zeros((bands, k, k))
    d[:, k // 2, k // 2] = 1.0
    return PsfStack(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects ``(criterion, passed, detail)`` for the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
