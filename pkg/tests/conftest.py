import numpy as np
import pytest

from ecgtrace.imgproc import ImageU8

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Register one acceptance criterion's outcome for the end-of-run summary."""

    def record(key, ok, detail=""):
        ACCEPTANCE_RESULTS[key] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gray(values, width=None):
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim == 1:
        arr = arr.reshape(1, width or arr.size)
    return ImageU8(arr)
