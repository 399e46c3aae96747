import hashlib
import logging

import pytest

from floorcast.sweep import SweepGrid, run_sweep

ACCEPTANCE_RESULTS: list = []

# seeds=5 at the default 2000 steps: the desk-scale version of the full sweep
REDUCED_GRID = SweepGrid(seeds=5, steps=2000)


@pytest.fixture(scope="session")
def reduced_sweep_rows(request):
    """Rows of the reduced sweep, checkpointed in the pytest cache so reruns resume."""
    digest = hashlib.sha256(repr(REDUCED_GRID).encode()).hexdigest()[:16]
    ckpt = request.config.cache.mkdir("floorcast-sweep") / f"{digest}.csv"
    log = logging.getLogger("floorcast.tests")
    log.info("reduced sweep checkpoint: %s", ckpt)
    return run_sweep(REDUCED_GRID, checkpoint=ckpt)


@pytest.fixture
def record_acceptance():
    def record(number, passed, detail):
        ACCEPTANCE_RESULTS.append((number, bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
