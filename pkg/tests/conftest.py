import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO = Path(__file__).resolve().parent.parent
DATA = Path(os.environ.get("IDAT_DATA_DIR", REPO / "data"))

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def record_acceptance():
    def record(criterion: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
