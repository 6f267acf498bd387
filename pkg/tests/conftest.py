import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# long reference runs are cached here across test sessions
CACHE_DIR = Path(os.environ.get("CHAOSCOPE_CACHE") or Path(__file__).resolve().parents[1] / ".chaoscope_cache")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def disk_cache():
    from chaoscope.pipeline import ReferenceCache

    return ReferenceCache(CACHE_DIR)


# one summary line per acceptance criterion, printed after the run
CRITERIA = {}


def record_criterion(number, ok, detail):
    CRITERIA[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA, key=lambda k: (int(str(k).rstrip("abc")), str(k))):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {str(n):>3}: {'PASS' if ok else 'FAIL'}  {detail}")
